"""Experiment configuration: one JSON document, strictly validated.

Unknown keys are rejected so that a typo cannot silently fall back to a
default.  The seed is mandatory (wall-clock seeding would break the
byte-reproducibility contract).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .errors import ConfigError
from .groups import GroupSpec
from .model import BuildConfig


@dataclass(frozen=True)
class GroupConfig:
    kind: str = "integers"
    d: int = 1

    def spec(self) -> GroupSpec:
        return GroupSpec(self.kind, self.d)


@dataclass(frozen=True)
class WeightConfig:
    q: float = 0.5
    n_max: int = 40


@dataclass(frozen=True)
class SystemConfig:
    kind: str = "bernoulli"  # bernoulli | rotation
    alpha: tuple = ()


@dataclass(frozen=True)
class SampleConfig:
    norm_trials: int = 10_000
    averaging_samples: int = 2000
    tower_samples: int = 100_000
    check_samples: int = 3000
    base_samples: int = 160
    equivariance_samples: int = 1000
    orbit_steps: int = 10_000


@dataclass(frozen=True)
class ToleranceConfig:
    certificate_slack: float = 1e-9
    decay_ratio_rel: float = 0.05
    decay_sigma: float = 4.0
    quadrature_abs: float = 1e-6
    conjugacy_abs: float = 1e-12


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 20240
    group: GroupConfig = field(default_factory=GroupConfig)
    second_group: GroupConfig = field(default_factory=lambda: GroupConfig("free", 2))
    weights: WeightConfig = field(default_factory=WeightConfig)
    second_weights: WeightConfig = field(default_factory=lambda: WeightConfig(0.5, 10))
    system: SystemConfig = field(default_factory=SystemConfig)
    stages: int = 4
    tower_height: int = 3
    tower_eta: float = 0.1
    n_trunc: int = 16
    samples: SampleConfig = field(default_factory=SampleConfig)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    lf_chain_n: int = 10
    lf_sampled_g0: int = 20

    def build_config(self) -> BuildConfig:
        return BuildConfig(
            stages=self.stages,
            n_trunc=self.n_trunc,
            check_samples=self.samples.check_samples,
            base_samples=self.samples.base_samples,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


_SECTION_TYPES = {
    "group": GroupConfig,
    "second_group": GroupConfig,
    "weights": WeightConfig,
    "second_weights": WeightConfig,
    "system": SystemConfig,
    "samples": SampleConfig,
    "tolerances": ToleranceConfig,
}

_SCALAR_KEYS = {
    "seed": int,
    "stages": int,
    "tower_height": int,
    "tower_eta": float,
    "n_trunc": int,
    "lf_chain_n": int,
    "lf_sampled_g0": int,
}


def _build_section(cls, data: dict, path: str):
    allowed = set(cls.__dataclass_fields__)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {path}: {sorted(unknown)}")
    coerced = {}
    for key, value in data.items():
        if key == "alpha":
            value = tuple(float(v) for v in value)
        coerced[key] = value
    try:
        return cls(**coerced)
    except TypeError as exc:
        raise ConfigError(f"bad values in {path}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config document must be a JSON object")
    allowed = set(_SECTION_TYPES) | set(_SCALAR_KEYS)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTION_TYPES:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key} must be an object")
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, key)
        else:
            try:
                kwargs[key] = _SCALAR_KEYS[key](value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
    cfg = ExperimentConfig(**kwargs)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if not 0.0 < cfg.weights.q < 1.0 or not 0.0 < cfg.second_weights.q < 1.0:
        raise ConfigError("weight ratio q must be in (0,1)")
    if cfg.weights.n_max < 1 or cfg.second_weights.n_max < 1:
        raise ConfigError("weight depth must be >= 1")
    if cfg.stages < 1:
        raise ConfigError("stages must be >= 1")
    if not 0.0 < cfg.tower_eta < 1.0:
        raise ConfigError("tower eta must be in (0,1)")
    if cfg.tower_height < 1:
        raise ConfigError("tower height must be >= 1")
    if cfg.n_trunc < 1:
        raise ConfigError("truncation window must be >= 1")
    cfg.group.spec()
    cfg.second_group.spec()
    if cfg.system.kind not in ("bernoulli", "rotation"):
        raise ConfigError(f"unknown system kind {cfg.system.kind!r}")


def load_config(path: str | None) -> ExperimentConfig:
    """Load and validate a config file; None means built-in defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)
