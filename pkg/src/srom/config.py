"""Pipeline configuration: a strict, versioned JSON schema.

Every run is parameterized by one nested record validated at load time;
unknown keys are rejected so that typos fail loudly instead of silently
falling back to defaults.  The canonical serialized form (sorted keys,
no whitespace) defines the configuration hash recorded in dataset
manifests.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError

__all__ = [
    "CONFIG_VERSION",
    "PhysicsConfig",
    "InitialConditionConfig",
    "ReductionConfig",
    "DataConfig",
    "RegressionConfig",
    "StudyConfig",
    "PipelineConfig",
    "load_config",
    "save_config",
    "config_hash",
]

CONFIG_VERSION = 1


def _require_int(section: str, key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{section}.{key} must be an integer")
    return value


def _require_real(section: str, key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number")
    return float(value)


def _require_str(section: str, key: str, value: Any) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{section}.{key} must be a string")
    return value


def _require_int_list(section: str, key: str, value: Any) -> list[int]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{section}.{key} must be a non-empty list of integers")
    return [_require_int(section, key, item) for item in value]


@dataclass(frozen=True)
class PhysicsConfig:
    """Continuum and discretization parameters of the full solver."""

    nu: float = 0.002
    t_final: float = 2.0
    dt: float = 0.005
    n_elements: int = 256

    def validate(self) -> None:
        if self.nu <= 0:
            raise ConfigError("physics.nu must be positive")
        if self.t_final <= 0:
            raise ConfigError("physics.t_final must be positive")
        if self.dt <= 0:
            raise ConfigError("physics.dt must be positive")
        if self.n_elements < 2:
            raise ConfigError("physics.n_elements must be at least 2")
        steps = self.t_final / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError("physics.t_final must be an integer multiple of dt")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass(frozen=True)
class InitialConditionConfig:
    """Random Fourier-sine initial conditions: K terms with weights
    w_k ~ Normal(mean, std^2) and amplitude decay 1/k."""

    n_terms: int = 50
    mean: float = 0.5
    std: float = 0.2

    def validate(self) -> None:
        if self.n_terms < 1:
            raise ConfigError("initial_condition.n_terms must be at least 1")
        if self.std < 0:
            raise ConfigError("initial_condition.std must be nonnegative")


@dataclass(frozen=True)
class ReductionConfig:
    """Reduced dimension and temporal downsampling factor."""

    r: int = 10
    gap: int = 5

    def validate(self) -> None:
        if self.r < 1:
            raise ConfigError("reduction.r must be at least 1")
        if self.gap < 1:
            raise ConfigError("reduction.gap must be at least 1")


@dataclass(frozen=True)
class DataConfig:
    """Training-data volume and the top-level seed all sub-streams
    derive from.  ``directory`` is the default dataset location; CLI
    flags override it."""

    n_trajectories: int = 200
    seed: int = 86
    directory: str | None = None

    def validate(self) -> None:
        if self.n_trajectories < 1:
            raise ConfigError("data.n_trajectories must be at least 1")
        if self.seed < 0:
            raise ConfigError("data.seed must be nonnegative")


@dataclass(frozen=True)
class RegressionConfig:
    """Closure-regression settings: regularization mode ("none",
    "fixed", "lcurve"), the fixed strength when applicable, and the
    selection mesh size."""

    mode: str = "lcurve"
    lam: float | None = None
    n_mesh: int = 100

    def validate(self) -> None:
        if self.mode not in ("none", "fixed", "lcurve"):
            raise ConfigError("regression.mode must be 'none', 'fixed', or 'lcurve'")
        if self.mode == "fixed":
            if self.lam is None:
                raise ConfigError("regression.lam is required when mode is 'fixed'")
            if self.lam < 0:
                raise ConfigError("regression.lam must be nonnegative")
        if self.n_mesh < 3:
            raise ConfigError("regression.n_mesh must be at least 3")


@dataclass(frozen=True)
class StudyConfig:
    """Study-level parameters.

    ``ladder`` overrides the geometric default ladder when given.  The
    prediction horizon is ``horizon_factor`` times the training window.
    Percentile levels are central-band widths in percent.
    """

    ladder: tuple[int, ...] | None = None
    n_test: int = 20
    horizon_factor: float = 2.0
    n_ensemble: int = 100
    percentile_levels: tuple[int, ...] = (25, 75, 95)
    n_repetitions: int = 20
    n_single_trajectory: int = 20
    sweep_r: tuple[int, ...] = (6, 8, 10, 12, 14, 16)
    sweep_gaps: tuple[int, ...] = tuple(range(1, 16))
    n_sweep: int = 50

    def validate(self) -> None:
        if self.ladder is not None:
            if len(self.ladder) < 3:
                raise ConfigError("study.ladder needs at least 3 rungs")
            if any(m < 1 for m in self.ladder):
                raise ConfigError("study.ladder entries must be positive")
            if any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
                raise ConfigError("study.ladder must be strictly increasing")
        if self.n_test < 1:
            raise ConfigError("study.n_test must be at least 1")
        if self.horizon_factor <= 0:
            raise ConfigError("study.horizon_factor must be positive")
        if self.n_ensemble < 1:
            raise ConfigError("study.n_ensemble must be at least 1")
        if not self.percentile_levels:
            raise ConfigError("study.percentile_levels must be non-empty")
        if any(not 0 < level < 100 for level in self.percentile_levels):
            raise ConfigError("study.percentile_levels must lie in (0, 100)")
        if self.n_repetitions < 1:
            raise ConfigError("study.n_repetitions must be at least 1")
        if self.n_single_trajectory < 1:
            raise ConfigError("study.n_single_trajectory must be at least 1")
        if not self.sweep_r or any(r < 1 for r in self.sweep_r):
            raise ConfigError("study.sweep_r must be a list of positive integers")
        if not self.sweep_gaps or any(g < 1 for g in self.sweep_gaps):
            raise ConfigError("study.sweep_gaps must be a list of positive integers")
        if self.n_sweep < 1:
            raise ConfigError("study.n_sweep must be at least 1")


_SECTION_TYPES: dict[str, type] = {
    "physics": PhysicsConfig,
    "initial_condition": InitialConditionConfig,
    "reduction": ReductionConfig,
    "data": DataConfig,
    "regression": RegressionConfig,
    "study": StudyConfig,
}

_INT_LIST_FIELDS = {"ladder", "percentile_levels", "sweep_r", "sweep_gaps"}
_REAL_FIELDS = {
    "nu", "t_final", "dt", "mean", "std", "lam", "horizon_factor",
}
_STR_FIELDS = {"mode", "directory"}


def _parse_section(name: str, cls: type, data: Mapping[str, Any]):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key {name}.{sorted(unknown)[0]}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if value is None and key in ("ladder", "lam", "directory"):
            kwargs[key] = None
        elif key in _INT_LIST_FIELDS:
            kwargs[key] = tuple(_require_int_list(name, key, value))
        elif key in _REAL_FIELDS:
            kwargs[key] = _require_real(name, key, value)
        elif key in _STR_FIELDS:
            kwargs[key] = _require_str(name, key, value)
        else:
            kwargs[key] = _require_int(name, key, value)
    return cls(**kwargs)


@dataclass(frozen=True)
class PipelineConfig:
    """Full run configuration.  Missing sections and keys take the
    defaults below (the shipped reference configuration); unknown keys
    are rejected."""

    version: int = CONFIG_VERSION
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    initial_condition: InitialConditionConfig = field(
        default_factory=InitialConditionConfig
    )
    reduction: ReductionConfig = field(default_factory=ReductionConfig)
    data: DataConfig = field(default_factory=DataConfig)
    regression: RegressionConfig = field(default_factory=RegressionConfig)
    study: StudyConfig = field(default_factory=StudyConfig)

    def validate(self) -> None:
        if self.version != CONFIG_VERSION:
            raise ConfigError(
                f"unsupported config version {self.version} "
                f"(expected {CONFIG_VERSION})"
            )
        self.physics.validate()
        self.initial_condition.validate()
        self.reduction.validate()
        self.data.validate()
        self.regression.validate()
        self.study.validate()
        if self.reduction.r > self.physics.n_elements + 1:
            raise ConfigError("reduction.r cannot exceed the node count")
        if self.reduction.gap > self.physics.n_steps:
            raise ConfigError("reduction.gap cannot exceed the step count")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("config root must be an object")
        known = {"version"} | set(_SECTION_TYPES)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown key {sorted(unknown)[0]}")
        kwargs: dict[str, Any] = {}
        if "version" in data:
            kwargs["version"] = _require_int("config", "version", data["version"])
        for name, section_cls in _SECTION_TYPES.items():
            if name in data:
                section = data[name]
                if not isinstance(section, Mapping):
                    raise ConfigError(f"{name} must be an object")
                kwargs[name] = _parse_section(name, section_cls, section)
        config = cls(**kwargs)
        config.validate()
        return config

    def to_dict(self) -> dict[str, Any]:
        raw = asdict(self)
        for section in _SECTION_TYPES:
            for key, value in raw[section].items():
                if isinstance(value, tuple):
                    raw[section][key] = list(value)
        return raw

    def replace_section(self, **sections: Any) -> "PipelineConfig":
        """Rebuild with replaced sections, re-validating the result."""
        raw = {f.name: getattr(self, f.name) for f in fields(self)}
        raw.update(sections)
        config = PipelineConfig(**raw)
        config.validate()
        return config


def load_config(path: str | Path) -> PipelineConfig:
    """Parse and validate a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON in {path}: {err}") from err
    return PipelineConfig.from_dict(data)


def save_config(config: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def config_hash(config: PipelineConfig) -> str:
    """SHA-256 of the canonical serialized form (sorted keys, compact)."""
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
