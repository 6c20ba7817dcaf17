"""Communication-channel degradations: codec proxies and packet loss.

Condition C0 is clean audio.  C1..C5 apply one of six codec proxies followed
by frame-drop packet loss at an increasing rate (default 0, 5, 10, 15, 20 %).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import firwin

from .errors import ConfigError
from .features import SAMPLE_RATE, AudioClip

MU = 255.0
A_LAW = 87.6
CODEC_IDS = (1, 2, 3, 4, 5, 6)
CODEC_NAMES = {
    1: "mulaw8",
    2: "alaw8",
    3: "resample8k",
    4: "requant6",
    5: "lowpass4k",
    6: "mulaw8+resample8k",
}
DEFAULT_LOSS_RATES = (0.0, 0.05, 0.10, 0.15, 0.20)
PACKET_MS = 20


def _quantize_8bit(y: np.ndarray) -> np.ndarray:
    # mid-tread, 255 levels: zero stays exactly zero
    return np.round(y * 127.0) / 127.0


def mulaw_roundtrip(x: np.ndarray) -> np.ndarray:
    y = np.sign(x) * np.log1p(MU * np.abs(x)) / np.log1p(MU)
    y = _quantize_8bit(y)
    return np.sign(y) * np.expm1(np.abs(y) * np.log1p(MU)) / MU


def alaw_roundtrip(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    norm = 1.0 + np.log(A_LAW)
    small = ax < 1.0 / A_LAW
    y = np.where(small, A_LAW * ax / norm, (1.0 + np.log(np.maximum(A_LAW * ax, 1.0))) / norm)
    y = _quantize_8bit(np.sign(x) * y)
    ay = np.abs(y)
    back = np.where(ay < 1.0 / norm, ay * norm / A_LAW, np.exp(ay * norm - 1.0) / A_LAW)
    return np.sign(y) * back


def resample_8k_roundtrip(x: np.ndarray) -> np.ndarray:
    """Decimate by 2 and restore the original grid by linear interpolation."""
    t = np.arange(x.size)
    return np.interp(t, t[::2], x[::2])


def requantize(x: np.ndarray, bits: int = 6) -> np.ndarray:
    """Mid-tread uniform quantizer with 2**bits - 1 levels on [-1, 1]."""
    half = (2**bits - 1) / 2.0
    top = np.floor(half)
    return np.clip(np.round(x * half), -top, top) / half


@lru_cache(maxsize=None)
def lowpass_taps(cutoff_hz: float = 4000.0, n_taps: int = 63) -> np.ndarray:
    return firwin(n_taps, cutoff_hz, fs=SAMPLE_RATE)


def lowpass_4k(x: np.ndarray) -> np.ndarray:
    """63-tap windowed-sinc low-pass; 'same' convolution removes the group delay."""
    return np.convolve(x, lowpass_taps(), mode="same")


_CODECS = {
    1: mulaw_roundtrip,
    2: alaw_roundtrip,
    3: resample_8k_roundtrip,
    4: requantize,
    5: lowpass_4k,
    6: lambda x: resample_8k_roundtrip(mulaw_roundtrip(x)),
}


def apply_codec(clip: AudioClip, codec_id: int) -> AudioClip:
    if codec_id not in _CODECS:
        raise ConfigError(f"unknown codec id {codec_id}; expected one of {CODEC_IDS}")
    out = np.clip(_CODECS[codec_id](clip.samples), -1.0, 1.0)
    return clip.with_samples(out)


def packet_mask(n_samples: int, loss_rate: float, seed: int, frame_ms: int = PACKET_MS) -> np.ndarray:
    """Boolean per-packet drop mask.

    One uniform draw per packet, dropped when below ``loss_rate``; for a fixed
    seed the dropped set therefore grows monotonically with the rate.
    """
    if not 0.0 <= loss_rate < 1.0:
        raise ConfigError(f"loss rate must be in [0, 1), got {loss_rate}")
    frame = SAMPLE_RATE * frame_ms // 1000
    n_packets = -(-n_samples // frame)
    draws = np.random.default_rng(seed).random(n_packets)
    return draws < loss_rate


def apply_packet_loss(clip: AudioClip, loss_rate: float, seed: int, frame_ms: int = PACKET_MS) -> AudioClip:
    mask = packet_mask(clip.samples.size, loss_rate, seed, frame_ms)
    if not mask.any():
        return clip.with_samples(clip.samples.copy())
    frame = SAMPLE_RATE * frame_ms // 1000
    keep = np.repeat(~mask, frame)[: clip.samples.size]
    return clip.with_samples(clip.samples * keep)


@dataclass(frozen=True)
class DegradationSpec:
    condition: str = "C0"
    codec_id: int | None = None
    loss_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.condition not in ("C0", "C1", "C2", "C3", "C4", "C5"):
            raise ConfigError(f"unknown condition {self.condition!r}")
        if self.condition == "C0" and (self.codec_id is not None or self.loss_rate != 0.0):
            raise ConfigError("C0 is clean: no codec and zero loss")
        if self.condition != "C0" and self.codec_id not in CODEC_IDS:
            raise ConfigError(f"{self.condition} needs a codec id in {CODEC_IDS}")
        if not 0.0 <= self.loss_rate < 1.0:
            raise ConfigError(f"loss rate must be in [0, 1), got {self.loss_rate}")

    @property
    def level(self) -> int:
        return int(self.condition[1])

    @classmethod
    def for_condition(cls, condition: str, codec_id: int | None = None, seed: int = 0, loss_rates=DEFAULT_LOSS_RATES):
        level = int(condition[1])
        if level == 0:
            return cls("C0", None, 0.0, seed)
        rates = tuple(loss_rates)
        if len(rates) != 5 or any(b < a for a, b in zip(rates, rates[1:])):
            raise ConfigError(f"need five nondecreasing loss rates for C1..C5, got {rates}")
        return cls(condition, codec_id, rates[level - 1], seed)


def condition_pipeline(clip: AudioClip, spec: DegradationSpec) -> AudioClip:
    if spec.level == 0:
        return clip.with_samples(clip.samples.copy(), condition="C0")
    lossy = apply_packet_loss(apply_codec(clip, spec.codec_id), spec.loss_rate, spec.seed)
    return lossy.with_samples(lossy.samples, condition=spec.condition)
