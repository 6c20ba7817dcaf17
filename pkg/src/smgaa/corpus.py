"""Manifests and the per-clip corpus operations shared by the CLI and scripts.

A manifest is a CSV file with the header ``clip_id,path,duration,label,condition``.
``path`` is relative to the manifest's directory and points at a WAV file for
audio manifests or an SMGT tensor file for feature manifests.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .degrade import CODEC_IDS, DEFAULT_LOSS_RATES, DegradationSpec, condition_pipeline
from .errors import ConfigError
from .features import CONDITIONS, DURATIONS, LABELS, AudioClip, featurize

MANIFEST_COLUMNS = ("clip_id", "path", "duration", "label", "condition")


@dataclass(frozen=True)
class ManifestRow:
    clip_id: str
    path: str
    duration: float
    label: str
    condition: str = "C0"

    def __post_init__(self):
        if self.duration not in DURATIONS:
            raise ConfigError(f"{self.clip_id}: duration {self.duration} not in {DURATIONS}")
        if self.label not in LABELS:
            raise ConfigError(f"{self.clip_id}: label {self.label!r} not in {LABELS}")
        if self.condition not in CONDITIONS:
            raise ConfigError(f"{self.clip_id}: condition {self.condition!r} not in {CONDITIONS}")

    @property
    def target(self) -> int:
        return LABELS.index(self.label)


def write_manifest(path, rows: list[ManifestRow]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for r in rows:
            w.writerow([r.clip_id, r.path, f"{r.duration:g}", r.label, r.condition])


def read_manifest(path) -> list[ManifestRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MANIFEST_COLUMNS:
            raise ConfigError(f"{path}: manifest header must be {','.join(MANIFEST_COLUMNS)}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append(ManifestRow(rec["clip_id"], rec["path"], float(rec["duration"]), rec["label"], rec["condition"]))
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
        return rows


def filter_rows(rows: list[ManifestRow], durations=None, conditions=None) -> list[ManifestRow]:
    return [
        r
        for r in rows
        if (durations is None or r.duration in durations) and (conditions is None or r.condition in conditions)
    ]


def resolve(manifest_path, row: ManifestRow) -> Path:
    p = Path(row.path)
    return p if p.is_absolute() else Path(manifest_path).parent / p


# -------------------------------------------------------------- degradation
@dataclass(frozen=True)
class DegradeConfig:
    loss_rates: tuple[float, ...] = DEFAULT_LOSS_RATES
    codecs: tuple[int, ...] = CODEC_IDS
    seed: int = 0

    def __post_init__(self):
        if len(self.loss_rates) != 5:
            raise ConfigError(f"loss_rates needs five values for C1..C5, got {self.loss_rates}")
        if not self.codecs or any(c not in CODEC_IDS for c in self.codecs):
            raise ConfigError(f"codecs must be a non-empty subset of {CODEC_IDS}, got {self.codecs}")


def clip_draws(clip_id: str, seed: int, codecs=CODEC_IDS) -> tuple[int, int]:
    """Codec id and packet-loss seed for one clip.

    Both depend only on the clip id and the run seed, so a clip keeps the same
    codec and the same packet draws across C1..C5 and the dropped packets at a
    higher loss rate include those at every lower one.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, zlib.crc32(clip_id.encode()))))
    codec = int(codecs[rng.integers(len(codecs))])
    return codec, int(rng.integers(2**32))


def degrade_clip(clip: AudioClip, condition: str, cfg: DegradeConfig = DegradeConfig()) -> AudioClip:
    if condition == "C0":
        return condition_pipeline(clip, DegradationSpec("C0"))
    codec, packet_seed = clip_draws(clip.clip_id, cfg.seed, cfg.codecs)
    spec = DegradationSpec.for_condition(condition, codec, packet_seed, cfg.loss_rates)
    return condition_pipeline(clip, spec)


def mixed_conditions(clips: list[AudioClip], seed: int, cfg: DegradeConfig = DegradeConfig()) -> list[AudioClip]:
    """Degrade each clip under one condition drawn uniformly from C0..C5."""
    rng = np.random.default_rng(seed)
    picks = rng.integers(len(CONDITIONS), size=len(clips))
    return [degrade_clip(c, CONDITIONS[k], cfg) for c, k in zip(clips, picks)]


def feature_matrix(clips: list[AudioClip], kind: str = "mfcc") -> tuple[np.ndarray, np.ndarray]:
    """Stack featurized clips into an N x 1 x 60 x T array plus 0/1 targets."""
    if not clips:
        raise ConfigError("no clips to featurize")
    x = np.concatenate([featurize(c, kind).data for c in clips])
    return x, np.array([c.target for c in clips], dtype=np.int64)


def with_condition(row: ManifestRow, condition: str, path: str) -> ManifestRow:
    return replace(row, condition=condition, path=path, clip_id=row.clip_id if condition == "C0" else f"{row.clip_id}_{condition}")
