"""Experiment configuration read from TOML.

Sections map one-to-one onto config dataclasses; unknown sections or keys
are rejected before any work starts. See ``configs/default.toml`` for a
fully commented example.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .grid import GridShape, InvalidInput
from .learning import TrainConfig
from .prior import PriorConfig
from .synthetic import SynthConfig


class ConfigError(ValueError):
    pass


PRIOR_MODES = ("gaze", "uniform", "mle", "none")


@dataclass(frozen=True)
class ModelConfig:
    H: int = 64
    C: int = 32


@dataclass(frozen=True)
class GradcheckConfig:
    n_configs: int = 20
    step: float = 1e-5
    tolerance: float = 1e-4
    D: int = 3
    H: int = 4
    C: int = 3
    K: int = 3
    shape: tuple[int, int, int] = (1, 3, 3)


@dataclass(frozen=True)
class BaselinesConfig:
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    variants: tuple[str, ...] = ("uniform_pool", "center_prior", "gt_gaze_pool", "gaze_mle",
                                 "stochastic_with_gaze", "stochastic_no_gaze")


@dataclass(frozen=True)
class BenchConfig:
    batch_size: int = 40
    repeats: int = 20


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    prior_mode: str = "gaze"
    data: str | None = None
    out: str = "runs/default"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    gradcheck: GradcheckConfig = field(default_factory=GradcheckConfig)
    baselines: BaselinesConfig = field(default_factory=BaselinesConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(
            self, seed=seed,
            train=dataclasses.replace(self.train, seed=seed),
            synth=dataclasses.replace(self.synth, seed=seed),
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["synth"]["shape"] = list(self.synth.shape.as_tuple())
        d["synth"]["kind_mix"] = list(self.synth.kind_mix)
        d["gradcheck"]["shape"] = list(self.gradcheck.shape)
        d["baselines"]["seeds"] = list(self.baselines.seeds)
        d["baselines"]["variants"] = list(self.baselines.variants)
        # seeds are carried by the experiment section
        del d["train"]["seed"], d["synth"]["seed"]
        exp = {k: d.pop(k) for k in _TOP_KEYS}
        if exp["data"] is None:
            del exp["data"]
        return {"experiment": exp, **d}


# sections whose keys are generated from the seed and must not be set directly
_DERIVED_KEYS = {"train": {"seed"}, "synth": {"seed"}}
_SECTIONS = {
    "model": ModelConfig, "train": TrainConfig, "prior": PriorConfig, "synth": SynthConfig,
    "gradcheck": GradcheckConfig, "baselines": BaselinesConfig, "bench": BenchConfig,
}
_TOP_KEYS = {"seed": int, "prior_mode": str, "data": str, "out": str}


def _coerce(section: str, key: str, value: Any, default: Any):
    where = f"[{section}] {key}"
    if isinstance(default, bool) or isinstance(value, bool):
        raise ConfigError(f"{where}: booleans are not accepted")
    if isinstance(default, float):
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, int):
        if not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, (tuple, GridShape)):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        if isinstance(default, GridShape):
            if len(value) != 3 or not all(isinstance(v, int) for v in value):
                raise ConfigError(f"{where}: expected [t, m, n] integers")
            return GridShape(*value)
        return tuple(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def _build(cls, section: str, table: dict):
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)} - _DERIVED_KEYS.get(section, set())
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {sorted(unknown)}")
    kwargs = {k: _coerce(section, k, v, getattr(defaults, k)) for k, v in table.items()}
    try:
        return cls(**kwargs)
    except InvalidInput as e:
        raise ConfigError(f"[{section}] {e}") from e


def from_dict(raw: dict) -> ExperimentConfig:
    top = {}
    sections = {}
    for key, value in raw.items():
        if key == "experiment":
            if not isinstance(value, dict):
                raise ConfigError("[experiment] must be a table")
            for k, v in value.items():
                if k not in _TOP_KEYS:
                    raise ConfigError(f"[experiment] unknown key {k!r}")
                if not isinstance(v, _TOP_KEYS[k]) or isinstance(v, bool):
                    raise ConfigError(f"[experiment] {k}: expected {_TOP_KEYS[k].__name__}")
                top[k] = v
        elif key in _SECTIONS:
            sections[key] = _build(_SECTIONS[key], key, value)
        else:
            raise ConfigError(f"unknown section [{key}]")
    if top.get("prior_mode", "gaze") not in PRIOR_MODES:
        raise ConfigError(f"[experiment] prior_mode must be one of {PRIOR_MODES}")
    from .baselines import BASELINES
    for v in sections.get("baselines", BaselinesConfig()).variants:
        if v not in BASELINES:
            raise ConfigError(f"[baselines] unknown variant {v!r}")
    cfg = ExperimentConfig(**top, **sections)
    return cfg.with_seed(cfg.seed)


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment config (raises ``ConfigError``)."""
    text = Path(path).read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return from_dict(raw)
