"""One JSON document holding every tunable of the pipeline."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .detections import NoiseModel
from .division import DivisionConfig
from .reconstruction import MatchConfig

CONFIG_ENV = "TOOTHBOX_CONFIG"
STAGE_NAMES = ("phantom", "noise", "detector")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SlicingConfig:
    fraction: float = 0.9
    interval_mm: float = 1.4

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValueError("fraction must be in (0, 1]")
        if not self.interval_mm > 0:
            raise ValueError("interval_mm must be > 0")


@dataclass(frozen=True)
class NoiseConfig:
    """Synthetic-detector noise; its seed is derived from the pipeline seed."""

    dropout: float = 0.0
    label_confusion: float = 0.0
    center_jitter: float = 0.0
    size_jitter: float = 0.0
    spurious_rate: float = 0.0

    def __post_init__(self):
        self.model(0)  # validates

    def model(self, seed) -> NoiseModel:
        return NoiseModel(self.dropout, self.label_confusion, self.center_jitter,
                          self.size_jitter, self.spurious_rate, int(seed))


@dataclass(frozen=True)
class EvaluationConfig:
    coverage_threshold: float = 0.95

    def __post_init__(self):
        if not 0 < self.coverage_threshold <= 1:
            raise ValueError("coverage_threshold must be in (0, 1]")


_SECTIONS = {
    "slicing": SlicingConfig,
    "match": MatchConfig,
    "division": DivisionConfig,
    "noise": NoiseConfig,
    "evaluation": EvaluationConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    slicing: SlicingConfig = field(default_factory=SlicingConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    division: DivisionConfig = field(default_factory=DivisionConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if int(self.threads) < 1:
            raise ConfigError("threads must be >= 1")

    def sub_seed(self, stage: str) -> int:
        """Deterministic per-stage seed drawn from the pipeline seed."""
        ss = np.random.SeedSequence([int(self.seed), STAGE_NAMES.index(stage)])
        return int(ss.generate_state(1)[0])

    def to_dict(self) -> dict:
        out = {name: _clean(asdict(getattr(self, name))) for name in _SECTIONS}
        out["seed"] = int(self.seed)
        out["threads"] = int(self.threads)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - set(_SECTIONS) - {"seed", "threads"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for name, typ in _SECTIONS.items():
            sub = d.get(name, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"section {name!r} must be an object")
            allowed = {f.name for f in fields(typ)}
            bad = set(sub) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
            try:
                kw[name] = typ(**sub)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid {name!r} section: {exc}") from None
        try:
            return cls(seed=int(d.get("seed", 0)), threads=int(d.get("threads", 1)), **kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def override(self, section=None, **changes) -> "PipelineConfig":
        """Copy with fields replaced; ``None`` values are ignored."""
        changes = {k: v for k, v in changes.items() if v is not None}
        if not changes:
            return self
        d = self.to_dict()
        if section is None:
            d.update(changes)
        else:
            d[section].update(changes)
        return PipelineConfig.from_dict(d)


def _clean(d: dict) -> dict:
    return {k: (float(v) if isinstance(v, float) else v) for k, v in d.items()}


def load_config(path=None) -> PipelineConfig:
    """Read a config file; falls back to ``$TOOTHBOX_CONFIG``, then defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return PipelineConfig()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg}") from None
    return PipelineConfig.from_dict(data)
