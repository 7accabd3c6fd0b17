"""Scenario configuration: dataclasses, YAML loading/dumping, validation.

An empty config file yields the full default scenario (25 m FOV, 0.5 m/step
robot, unit survival probability, detection band 0.4/0.6, extraction weight
0.5, prune weight 0.001, merge threshold 10, track confirmation length 3).
Unknown keys and out-of-range values are rejected with the offending key path
in the message.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .filter import FilterConfig
from .planner import STRATEGIES, PlannerConfig, WorldBounds
from .tracks import TrackConfig


class ConfigError(ValueError):
    """Configuration file or value problem; message names the key path."""


@dataclass(frozen=True)
class TargetParams:
    """Ground-truth target population."""

    count: int = 10
    stationary: bool = True
    speed: float = 0.05
    direction_period: int = 400

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if self.speed < 0.0:
            raise ValueError(f"speed must be >= 0, got {self.speed}")
        if self.direction_period < 1:
            raise ValueError(f"direction_period must be >= 1, got {self.direction_period}")


@dataclass(frozen=True)
class SensorParams:
    """Sensor geometry and noise (isotropic measurement noise, std in m)."""

    fov_radius: float = 25.0
    p_detect_given_in_fov: float = 0.98
    meas_noise_std: float = 1.0

    def __post_init__(self):
        if self.fov_radius <= 0.0:
            raise ValueError(f"fov_radius must be positive, got {self.fov_radius}")
        if not 0.0 <= self.p_detect_given_in_fov <= 1.0:
            raise ValueError(
                f"p_detect_given_in_fov must be in [0, 1], got {self.p_detect_given_in_fov}"
            )
        if self.meas_noise_std <= 0.0:
            raise ValueError(f"meas_noise_std must be positive, got {self.meas_noise_std}")


@dataclass(frozen=True)
class MotionParams:
    """Filter-side linear motion model (identity transition, isotropic noise)."""

    survival_prob: float = 1.0
    process_noise: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.survival_prob <= 1.0:
            raise ValueError(f"survival_prob must be in [0, 1], got {self.survival_prob}")
        if self.process_noise < 0.0:
            raise ValueError(f"process_noise must be >= 0, got {self.process_noise}")


@dataclass(frozen=True)
class PlannerParams:
    strategy: str = "lawnmower"
    lane_spacing: float = 50.0
    speed: float = 0.5
    largest_scalarization: str = "trace"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.lane_spacing <= 0.0:
            raise ValueError(f"lane_spacing must be positive, got {self.lane_spacing}")
        if self.speed <= 0.0:
            raise ValueError(f"speed must be positive, got {self.speed}")
        if self.largest_scalarization not in ("trace", "det"):
            raise ValueError(
                f"largest_scalarization must be 'trace' or 'det', "
                f"got {self.largest_scalarization!r}"
            )


@dataclass(frozen=True)
class GpConfig:
    """Track-history GP prediction settings.

    ``enabled`` may be true, false, or "auto": auto engages GP extrapolation
    only for moving targets when a ``training_file`` provides offline-fit
    hyperparameters (track histories of slow targets are noise-dominated, so
    extrapolating under guessed kernel parameters hurts more than it helps).
    The training file is plain delimited text with columns t,x,y; per-track
    refits are off by default.
    """

    enabled: bool | str = "auto"
    signal_variance: float = 25.0
    length_scale: float = 20.0
    noise_variance: float = 1.0
    window: int = 50
    training_file: str | None = None
    refit_per_track: bool = False

    def __post_init__(self):
        if self.enabled not in (True, False, "auto"):
            raise ValueError(f"enabled must be true, false, or 'auto', got {self.enabled!r}")
        if self.signal_variance <= 0.0:
            raise ValueError(f"signal_variance must be positive, got {self.signal_variance}")
        if self.length_scale <= 0.0:
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")
        if self.noise_variance < 0.0:
            raise ValueError(f"noise_variance must be >= 0, got {self.noise_variance}")
        if self.window < 2:
            raise ValueError(f"window must be >= 2, got {self.window}")


_ESTIMATES = ("under", "exact", "over")
_CLUTTER_MODELS = ("bernoulli", "poisson")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one simulated search-and-tracking run depends on."""

    world: WorldBounds = field(default_factory=WorldBounds)
    targets: TargetParams = field(default_factory=TargetParams)
    sensor: SensorParams = field(default_factory=SensorParams)
    motion: MotionParams = field(default_factory=MotionParams)
    planner: PlannerParams = field(default_factory=PlannerParams)
    filter: FilterConfig = field(default_factory=FilterConfig)
    tracks: TrackConfig = field(default_factory=TrackConfig)
    gp: GpConfig = field(default_factory=GpConfig)
    steps: int = 7278
    seed: int = 0
    clutter_rate: float = 0.0
    clutter_model: str = "bernoulli"
    initial_estimate: str = "exact"
    initial_offset_mean: float = 15.0
    initial_cov: float = 50.0
    push_enabled: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.clutter_rate < 0.0:
            raise ValueError(f"clutter_rate must be >= 0, got {self.clutter_rate}")
        if self.clutter_model not in _CLUTTER_MODELS:
            raise ValueError(
                f"clutter_model must be one of {_CLUTTER_MODELS}, got {self.clutter_model!r}"
            )
        if self.initial_estimate not in _ESTIMATES:
            raise ValueError(
                f"initial_estimate must be one of {_ESTIMATES}, got {self.initial_estimate!r}"
            )
        if self.initial_offset_mean < 0.0:
            raise ValueError(f"initial_offset_mean must be >= 0, got {self.initial_offset_mean}")
        if self.initial_cov <= 0.0:
            raise ValueError(f"initial_cov must be positive, got {self.initial_cov}")
        # Full-coverage requirement for the sweep pattern.
        if self.planner.lane_spacing > 2.0 * self.sensor.fov_radius + 1e-9:
            raise ValueError(
                f"planner.lane_spacing ({self.planner.lane_spacing}) must not exceed "
                f"twice sensor.fov_radius ({self.sensor.fov_radius}) or the sweep "
                f"leaves coverage gaps"
            )

    def planner_config(self) -> PlannerConfig:
        return PlannerConfig(
            strategy=self.planner.strategy,
            lane_spacing=self.planner.lane_spacing,
            world=self.world,
            largest_scalarization=self.planner.largest_scalarization,
        )


_SECTIONS = {
    "world": WorldBounds,
    "targets": TargetParams,
    "sensor": SensorParams,
    "motion": MotionParams,
    "planner": PlannerParams,
    "filter": FilterConfig,
    "tracks": TrackConfig,
    "gp": GpConfig,
}
_TOP_SCALARS = {
    "steps": int,
    "seed": int,
    "clutter_rate": float,
    "clutter_model": str,
    "initial_estimate": str,
    "initial_offset_mean": float,
    "initial_cov": float,
    "push_enabled": bool,
}


def _coerce(path: str, value, target_type):
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if target_type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _build_section(name: str, cls, data: dict):
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key '{name}.{unknown[0]}'")
    defaults = cls()
    kwargs = {}
    for key, value in data.items():
        path = f"{name}.{key}"
        default_value = getattr(defaults, key)
        if value is None and key == "training_file":
            kwargs[key] = None
        elif key == "enabled" and name == "gp":
            if not (isinstance(value, bool) or value == "auto"):
                raise ConfigError(f"{path}: expected true, false, or 'auto', got {value!r}")
            kwargs[key] = value
        elif default_value is None:
            kwargs[key] = _coerce(path, value, str)
        else:
            kwargs[key] = _coerce(path, value, type(default_value))
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_from_dict(data: dict) -> ScenarioConfig:
    """Build a validated ScenarioConfig from a parsed mapping."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    unknown = sorted(set(data) - set(_SECTIONS) - set(_TOP_SCALARS))
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}'")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name, {})
        if section is None:
            section = {}
        if not isinstance(section, dict):
            raise ConfigError(f"{name}: expected a mapping")
        kwargs[name] = _build_section(name, cls, section)
    for key, typ in _TOP_SCALARS.items():
        if key in data:
            kwargs[key] = _coerce(key, data[key], typ)
    try:
        return ScenarioConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Plain-dict form of a config; inverse of ``config_from_dict``."""
    out: dict = {}
    for name in _SECTIONS:
        out[name] = dataclasses.asdict(getattr(cfg, name))
    for key in _TOP_SCALARS:
        out[key] = getattr(cfg, key)
    return out


def load_config(path) -> ScenarioConfig:
    """Parse a YAML scenario config; an empty file yields all defaults."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return config_from_dict(data)


def dump_config(cfg: ScenarioConfig) -> str:
    """YAML text that round-trips through ``load_config``."""
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def save_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dump_config(cfg))
