"""Experiment configuration: one INI file covering model, training, degradation, paths and run options."""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import dump_sections, from_section, read_config_file, read_sections
from .corpus import DegradeConfig
from .errors import ConfigError
from .features import CONDITIONS, DURATIONS, FEATURE_KINDS
from .model import ModelConfig
from .training import TrainConfig


@dataclass(frozen=True)
class PathsConfig:
    train_manifest: str = ""
    eval_manifest: str = ""
    out_dir: str = "runs"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    workers: int = 1
    feature: str = "mfcc"
    durations: tuple[float, ...] = DURATIONS
    conditions: tuple[str, ...] = CONDITIONS

    def __post_init__(self):
        if self.feature not in FEATURE_KINDS:
            raise ConfigError(f"feature must be one of {FEATURE_KINDS}, got {self.feature!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        bad = [d for d in self.durations if d not in DURATIONS]
        if bad or not self.durations:
            raise ConfigError(f"durations must be a non-empty subset of {DURATIONS}, got {self.durations}")
        bad = [c for c in self.conditions if c not in CONDITIONS]
        if bad or not self.conditions:
            raise ConfigError(f"conditions must be a non-empty subset of {CONDITIONS}, got {self.conditions}")


SECTIONS = {
    "model": ModelConfig,
    "train": TrainConfig,
    "degrade": DegradeConfig,
    "paths": PathsConfig,
    "run": RunConfig,
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    degrade: DegradeConfig = field(default_factory=DegradeConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    run: RunConfig = field(default_factory=RunConfig)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls._from_sections(read_sections(text))

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls._from_sections(read_config_file(path))

    @classmethod
    def _from_sections(cls, sections: dict[str, dict[str, str]]) -> "ExperimentConfig":
        unknown = sorted(set(sections) - set(SECTIONS))
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
        parts = {}
        for name, kind in SECTIONS.items():
            parts[name] = from_section(kind, sections.get(name, {}), name)
        return cls(**parts)

    def to_text(self) -> str:
        return dump_sections({name: getattr(self, name) for name in SECTIONS})
