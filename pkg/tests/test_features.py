import math
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smgaa import features as fx
from smgaa.errors import AudioFormatError, ConfigError


def clip_of(duration, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    n = round(duration * fx.SAMPLE_RATE)
    return fx.AudioClip(np.clip(rng.standard_normal(n) * scale * 0.3, -1, 1), duration)


@pytest.mark.parametrize("n,expected", [(8000, 16), (16000, 32), (24000, 47), (32000, 63)])
def test_frame_counts(n, expected):
    frames = fx.frame_and_window(np.zeros(n))
    assert frames.shape == (expected, 1024)
    assert expected == math.ceil(n / 512)


def test_zero_clip_frames():
    assert not fx.frame_and_window(np.zeros(8000)).any()


def test_frame_errors():
    with pytest.raises(ConfigError):
        fx.frame_and_window(np.zeros(1))
    with pytest.raises(ConfigError):
        fx.frame_and_window(np.zeros(100), win=256, hop=512)


def test_frames_are_centered():
    x = np.arange(8000.0)
    frames = fx.frame_and_window(x)
    window = fx.get_window("hann", 1024)
    # frame k is centred on sample k * hop
    np.testing.assert_allclose(frames[3, 512], x[3 * 512] * window[512])


def test_parseval():
    rng = np.random.default_rng(0)
    frames = rng.standard_normal((4, 1024))
    spec = fx.power_spectrum(frames)
    full = spec[:, 0] + 2 * spec[:, 1:-1].sum(axis=1) + spec[:, -1]
    np.testing.assert_allclose(full, 1024 * (frames**2).sum(axis=1), rtol=1e-8)


def test_power_spectrum_naive_dft():
    rng = np.random.default_rng(1)
    frame = rng.standard_normal(64)
    n = np.arange(64)
    naive = np.array([abs(sum(frame[j] * np.exp(-2j * np.pi * k * j / 64) for j in n)) ** 2 for k in range(33)])
    np.testing.assert_allclose(fx.power_spectrum(frame[None], nfft=64)[0], naive, rtol=0, atol=1e-9 * naive.max())


def test_sine_single_dominant_bin():
    k = 40
    t = np.arange(1024)
    frame = np.sin(2 * np.pi * k * t / 1024)[None] * fx.get_window("hann", 1024)
    spec = fx.power_spectrum(frame)[0]
    assert spec.argmax() == k
    rest = np.delete(spec, [k - 1, k, k + 1])
    assert rest.max() < 1e-6 * spec[k]


def test_zero_frame_zero_spectrum():
    assert not fx.power_spectrum(np.zeros((2, 1024))).any()


def test_filterbank_flat_spectrum_linear():
    out = fx.filterbank(np.ones((3, 513)), "linear")
    assert out.shape == (3, 70)
    spread = (out.max() - out.min()) / out.mean()
    assert spread <= 0.01


@pytest.mark.parametrize("scale", ["mel", "linear", "geometric"])
def test_filter_centres_and_coverage(scale):
    edges = fx.filter_edges(scale, 70)
    centres = edges[1:-1]
    assert np.all(np.diff(centres) > 0)
    bank = fx.filterbank_matrix(scale)
    freqs = np.arange(513) * 16000 / 1024
    inside = (freqs > 0) & (freqs < 8000)
    assert np.all(bank[:, inside].sum(axis=0) > 0)


def test_geometric_ratio_constant():
    centres = fx.filter_edges("geometric", 70)[1:-1]
    expected_ratio = (8000 / fx.GEOMETRIC_FMIN) ** (1 / 70)
    np.testing.assert_allclose(centres[1:] / centres[:-1], expected_ratio, rtol=1e-9)


def test_filterbank_too_fine():
    with pytest.raises(ConfigError, match="resolution"):
        fx.filterbank_matrix("linear", 2000)
    with pytest.raises(ConfigError):
        fx.filterbank_matrix("linear", 1)


def test_dct_orthonormal():
    m = fx.dct_matrix(70, 70)
    np.testing.assert_allclose(m @ m.T, np.eye(70), atol=1e-10)


def test_cepstra_constant_energy():
    ceps = fx.cepstra(np.full((5, 70), 3.0))
    assert ceps.shape == (60, 5)
    np.testing.assert_allclose(ceps[0], np.log(3.0) * np.sqrt(70))
    assert np.abs(ceps[1:]).max() <= 1e-10


def test_cepstra_matches_cosine_sum():
    rng = np.random.default_rng(2)
    e = rng.uniform(0.1, 5.0, (3, 70))
    logs = np.log(e)
    oracle = np.zeros((60, 3))
    for t in range(3):
        for k in range(60):
            s = sum(logs[t, n] * math.cos(math.pi * k * (2 * n + 1) / 140) for n in range(70))
            oracle[k, t] = s * (math.sqrt(1 / 70) if k == 0 else math.sqrt(2 / 70))
    np.testing.assert_allclose(fx.cepstra(e), oracle, atol=1e-10, rtol=0)


def test_cepstra_errors():
    with pytest.raises(ConfigError):
        fx.cepstra(np.ones((2, 50)), 60)


@pytest.mark.parametrize("kind", fx.FEATURE_KINDS)
@pytest.mark.parametrize("duration", fx.DURATIONS)
def test_featurize_geometry(kind, duration):
    fm = fx.featurize(clip_of(duration), kind)
    assert fm.data.shape == (1, 1, 60, fx.FRAMES_PER_DURATION[duration])
    assert fm.kind == kind


def test_featurize_normalization():
    fm = fx.featurize(clip_of(1.5, seed=3), "lfcc").data[0, 0]
    assert fm.shape[1] == 47
    assert np.abs(fm.mean(axis=1)).max() <= 1e-9
    assert np.abs(fm.var(axis=1) - 1.0).max() <= 1e-6


@pytest.mark.parametrize("kind", fx.FEATURE_KINDS)
def test_featurize_silence_finite(kind):
    fm = fx.featurize(fx.AudioClip(np.zeros(8000), 0.5), kind)
    assert np.all(np.isfinite(fm.data))
    assert not fm.data.any()


def test_featurize_deterministic():
    c = clip_of(2.0, seed=4)
    assert fx.featurize(c, "cqcc").data.tobytes() == fx.featurize(c, "cqcc").data.tobytes()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(fx.DURATIONS), st.floats(0.0, 1.0))
def test_featurize_finite_property(seed, duration, amp):
    rng = np.random.default_rng(seed)
    n = round(duration * fx.SAMPLE_RATE)
    samples = np.clip(rng.uniform(-amp, amp, n), -1, 1)
    fm = fx.featurize(fx.AudioClip(samples, duration), "mfcc")
    assert np.all(np.isfinite(fm.data))


def test_clip_validation():
    with pytest.raises(ConfigError):
        fx.AudioClip(np.zeros(100), 0.5)
    with pytest.raises(ConfigError):
        fx.AudioClip(np.full(8000, 1.5), 0.5)
    with pytest.raises(ConfigError):
        fx.AudioClip(np.zeros(8000), 0.7)


def test_wav_round_trip(tmp_path):
    x = np.round(np.linspace(-0.9, 0.9, 8000) * 32768) / 32768
    path = tmp_path / "a.wav"
    fx.write_wav(path, x)
    np.testing.assert_array_equal(fx.read_wav(path), x)
    clip = fx.load_clip(path, 0.5, "spoof")
    assert clip.label == "spoof" and clip.clip_id == "a"


def test_wav_rejects_other_formats(tmp_path):
    path = tmp_path / "stereo.wav"
    with wave.open(str(path), "wb") as w:
        w.setnchannels(2)
        w.setsampwidth(2)
        w.setframerate(16000)
        w.writeframes(b"\x00" * 400)
    with pytest.raises(AudioFormatError, match="mono"):
        fx.read_wav(path)
    path = tmp_path / "8k.wav"
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(8000)
        w.writeframes(b"\x00" * 400)
    with pytest.raises(AudioFormatError, match="16000"):
        fx.read_wav(path)
