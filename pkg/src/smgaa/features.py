"""Cepstral time-frequency features (MFCC / LFCC / CQCC) for ultra-short clips.

The pipeline is: centered framing with a Hann window, power spectrum,
triangular filterbank (mel, linear or geometric centre spacing), log, and an
orthonormal DCT-II keeping 60 coefficients.  At 16 kHz with a 512-sample hop
this yields T = 16, 32, 47, 63 frames for 0.5, 1.0, 1.5 and 2.0 s.
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from .errors import AudioFormatError, ConfigError

SAMPLE_RATE = 16000
WIN_LENGTH = 1024
HOP_LENGTH = 512
N_FFT = 1024
N_FILTERS = 70
N_CEPS = 60
LOG_FLOOR = 1e-10
GEOMETRIC_FMIN = 200.0

DURATIONS = (0.5, 1.0, 1.5, 2.0)
FRAMES_PER_DURATION = {0.5: 16, 1.0: 32, 1.5: 47, 2.0: 63}
FEATURE_KINDS = ("mfcc", "lfcc", "cqcc")
_SCALE_FOR_KIND = {"mfcc": "mel", "lfcc": "linear", "cqcc": "geometric"}
LABELS = ("bona_fide", "spoof")
CONDITIONS = ("C0", "C1", "C2", "C3", "C4", "C5")


@dataclass
class AudioClip:
    samples: np.ndarray
    duration_s: float
    label: str = "bona_fide"
    condition: str = "C0"
    sample_rate: int = SAMPLE_RATE
    clip_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate != SAMPLE_RATE:
            raise AudioFormatError(f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}")
        if self.duration_s not in FRAMES_PER_DURATION:
            raise ConfigError(f"duration {self.duration_s} s is not one of {DURATIONS}")
        expected = round(self.duration_s * self.sample_rate)
        if self.samples.shape != (expected,):
            raise ConfigError(f"{self.duration_s} s clip needs {expected} samples, got {self.samples.shape}")
        if self.samples.size and np.abs(self.samples).max() > 1.0:
            raise ConfigError("samples must lie in [-1, 1]")
        if self.label not in LABELS:
            raise ConfigError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.condition not in CONDITIONS:
            raise ConfigError(f"condition must be one of {CONDITIONS}, got {self.condition!r}")

    @property
    def target(self) -> int:
        """Class index used by the classifier: 0 bona fide, 1 spoof."""
        return LABELS.index(self.label)

    def with_samples(self, samples: np.ndarray, **changes) -> "AudioClip":
        fields = dict(duration_s=self.duration_s, label=self.label, condition=self.condition, clip_id=self.clip_id)
        fields.update(changes)
        return AudioClip(samples, **fields)


@dataclass
class FeatureMap:
    data: np.ndarray  # B x 1 x 60 x T
    kind: str
    duration_s: float = field(default=0.0)

    def __post_init__(self):
        if self.data.ndim != 4 or self.data.shape[1] != 1 or self.data.shape[2] != N_CEPS:
            raise ConfigError(f"feature map must be B x 1 x {N_CEPS} x T, got {self.data.shape}")
        if self.duration_s and self.data.shape[3] != FRAMES_PER_DURATION[self.duration_s]:
            raise ConfigError(
                f"{self.duration_s} s features need T={FRAMES_PER_DURATION[self.duration_s]}, got {self.data.shape[3]}"
            )

    @property
    def n_frames(self) -> int:
        return self.data.shape[3]


def n_frames(n_samples: int, hop: int = HOP_LENGTH) -> int:
    return math.ceil(n_samples / hop)


def frame_and_window(samples: np.ndarray, win: int = WIN_LENGTH, hop: int = HOP_LENGTH) -> np.ndarray:
    """Centered, reflect-padded, Hann-windowed frames; shape (ceil(N / hop), win)."""
    samples = np.asarray(samples, dtype=np.float64)
    if not win >= hop >= 1:
        raise ConfigError(f"need win >= hop >= 1, got win={win}, hop={hop}")
    if samples.size < 2:
        raise ConfigError("clip must contain at least 2 samples")
    padded = np.pad(samples, (win // 2, win // 2), mode="reflect")
    count = n_frames(samples.size, hop)
    frames = sliding_window_view(padded, win)[::hop][:count]
    return frames * get_window("hann", win)


def power_spectrum(frames: np.ndarray, nfft: int = N_FFT) -> np.ndarray:
    if nfft < frames.shape[-1]:
        raise ConfigError(f"nfft={nfft} shorter than the frame length {frames.shape[-1]}")
    return np.abs(np.fft.rfft(frames, n=nfft, axis=-1)) ** 2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def filter_edges(scale: str, n_filters: int, fmax: float = SAMPLE_RATE / 2, fmin_geometric: float = GEOMETRIC_FMIN) -> np.ndarray:
    """n_filters + 2 edge frequencies; filter i spans edges[i] .. edges[i + 2]."""
    if scale == "mel":
        return mel_to_hz(np.linspace(0.0, hz_to_mel(fmax), n_filters + 2))
    if scale == "linear":
        return np.linspace(0.0, fmax, n_filters + 2)
    if scale == "geometric":
        return np.concatenate([[0.0], np.geomspace(fmin_geometric, fmax, n_filters + 1)])
    raise ConfigError(f"unknown filterbank scale {scale!r}")


def filterbank_matrix(scale: str, n_filters: int = N_FILTERS, nfft: int = N_FFT, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Unit-area triangular filters, shape (n_filters, nfft // 2 + 1)."""
    if n_filters < 2:
        raise ConfigError(f"need at least 2 filters, got {n_filters}")
    edges = filter_edges(scale, n_filters, sample_rate / 2)
    freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    left, centre, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - left) / (centre - left)
    falling = (right - freqs) / (right - centre)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    area = weights.sum(axis=1)
    if np.any(area == 0):
        raise ConfigError(
            f"{n_filters} {scale} filters exceed the FFT resolution ({nfft}-point): filter {int(np.argmin(area))} covers no bin"
        )
    return weights / area[:, None]


def filterbank(spectra: np.ndarray, kind: str, n_filters: int = N_FILTERS) -> np.ndarray:
    """Filter energies [T, n_filters]; ``kind`` is a scale or a feature name."""
    scale = _SCALE_FOR_KIND.get(kind, kind)
    nfft = 2 * (spectra.shape[-1] - 1)
    return spectra @ filterbank_matrix(scale, n_filters, nfft).T


def dct_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Orthonormal DCT-II rows 0..n_out-1, shape (n_out, n_in)."""
    n = np.arange(n_in)
    k = np.arange(n_out)[:, None]
    m = np.sqrt(2.0 / n_in) * np.cos(np.pi * k * (2 * n + 1) / (2 * n_in))
    m[0] /= np.sqrt(2.0)
    return m


def cepstra(energies: np.ndarray, n_ceps: int = N_CEPS) -> np.ndarray:
    """Log-compressed, DCT-decorrelated energies transposed to [n_ceps, T]."""
    if n_ceps > energies.shape[-1]:
        raise ConfigError(f"n_ceps={n_ceps} exceeds the number of filters {energies.shape[-1]}")
    if np.any(energies < 0):
        raise ConfigError("filter energies must be non-negative")
    logs = np.log(np.maximum(energies, LOG_FLOOR))
    return dct_matrix(energies.shape[-1], n_ceps) @ logs.T


def normalize(feature: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Zero mean, unit variance along T for every row; flat rows become 0."""
    mean = feature.mean(axis=-1, keepdims=True)
    std = feature.std(axis=-1, keepdims=True)
    flat = std <= tol * np.maximum(1.0, np.abs(mean))
    return np.where(flat, 0.0, (feature - mean) / np.where(flat, 1.0, std))


def featurize(clip: AudioClip, kind: str = "mfcc") -> FeatureMap:
    if kind not in FEATURE_KINDS:
        raise ConfigError(f"feature kind must be one of {FEATURE_KINDS}, got {kind!r}")
    spectra = power_spectrum(frame_and_window(clip.samples))
    ceps = normalize(cepstra(filterbank(spectra, kind)))
    return FeatureMap(ceps[None, None], kind, clip.duration_s)


# ---------------------------------------------------------------- WAV files
def read_wav(path) -> np.ndarray:
    """Samples of a mono 16-bit 16 kHz PCM WAV file, scaled to [-1, 1)."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1:
                raise AudioFormatError(f"{path}: expected mono, got {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise AudioFormatError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
            if w.getframerate() != SAMPLE_RATE:
                raise AudioFormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {w.getframerate()} Hz")
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: {exc}") from exc
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def write_wav(path, samples: np.ndarray) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(SAMPLE_RATE)
        w.writeframes(pcm.tobytes())


def load_clip(path, duration_s: float, label: str, condition: str = "C0", clip_id: str = "") -> AudioClip:
    return AudioClip(read_wav(path), duration_s, label, condition, clip_id=clip_id or Path(path).stem)
