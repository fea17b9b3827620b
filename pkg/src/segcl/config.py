"""Nested pipeline configuration loaded from YAML or JSON.

Every section maps onto one of the module config dataclasses. Unknown keys are
rejected so a typo never silently falls back to a default.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .encoder import EncoderConfig
from .graph import GraphBuildConfig
from .gspan import MinerConfig
from .losses import LossConfig
from .probe import ProbeConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusConfig:
    format: str = "plain-lines"
    stopwords: str | None = None  # word-list file; None -> built-in list
    entities: str | None = None
    min_count: int = 1

    def __post_init__(self) -> None:
        if self.format not in ("plain-lines", "labeled-tsv"):
            raise ValueError("format must be 'plain-lines' or 'labeled-tsv'")
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")


SECTIONS: dict[str, type] = {
    "corpus": CorpusConfig,
    "graph": GraphBuildConfig,
    "miner": MinerConfig,
    "encoder": EncoderConfig,
    "loss": LossConfig,
    "train": TrainConfig,
    "probe": ProbeConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    graph: GraphBuildConfig = field(default_factory=GraphBuildConfig)
    miner: MinerConfig = field(default_factory=MinerConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)

    @classmethod
    def from_dict(cls, data: dict[str, Any] | None) -> "PipelineConfig":
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping of sections")
        unknown = sorted(set(data) - set(SECTIONS))
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
        built = {}
        for name, klass in SECTIONS.items():
            section = data.get(name)
            section = {} if section is None else section
            if not isinstance(section, dict):
                raise ConfigError(f"section {name!r} must be a mapping")
            allowed = {f.name for f in fields(klass)}
            bad = sorted(set(section) - allowed)
            if bad:
                raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(bad)}")
            kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in section.items()}
            try:
                built[name] = klass(**kwargs)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{name}] {exc}") from None
        return cls(**built)

    def to_dict(self) -> dict[str, dict[str, Any]]:
        out = {}
        for name in SECTIONS:
            d = dataclasses.asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def replace(self, section: str, **changes) -> "PipelineConfig":
        try:
            updated = dataclasses.replace(getattr(self, section), **changes)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}") from None
        return dataclasses.replace(self, **{section: updated})


def load_config(path: str | Path | None) -> PipelineConfig:
    """Read a YAML (or JSON, a YAML subset) file; ``None`` gives the defaults."""
    if path is None:
        return PipelineConfig()
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON ({exc})") from None
    return PipelineConfig.from_dict(data)
