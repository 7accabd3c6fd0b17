"""GM-PHD search-and-tracking toolkit for a mobile sensor with a limited FOV."""

from .gaussians import (
    EmptyMergeError,
    GaussianComponent,
    Intensity,
    InvalidComponentError,
    gaussian_density,
    mahalanobis_sq,
    merge_moment,
    merge_plain_average,
)
from .fov import FovDisk, UnsupportedDimensionError, prob_detection, prob_in_fov
from .filter import (
    FilterConfig,
    LinearMotionModel,
    SensorModel,
    TargetEstimate,
    birth_from_measurements,
    extract_targets,
    predict,
    prune_merge,
    repulsion_push,
    update,
)
from .gp import GpHyperparams, GpModel, fit_hyperparams, predict_track
from .tracks import Track, TrackConfig, associate, confirmed_tracks
from .planner import PlannerConfig, RobotState, WorldBounds, next_position
from .config import ConfigError, ScenarioConfig, dump_config, load_config
from .sim import MetricsRecord, RunResult, compute_metrics, run_scenario, sense, step_world

__all__ = [
    "ConfigError",
    "EmptyMergeError",
    "FilterConfig",
    "FovDisk",
    "GaussianComponent",
    "GpHyperparams",
    "GpModel",
    "Intensity",
    "InvalidComponentError",
    "LinearMotionModel",
    "MetricsRecord",
    "PlannerConfig",
    "RobotState",
    "RunResult",
    "ScenarioConfig",
    "SensorModel",
    "TargetEstimate",
    "Track",
    "TrackConfig",
    "UnsupportedDimensionError",
    "WorldBounds",
    "associate",
    "birth_from_measurements",
    "compute_metrics",
    "confirmed_tracks",
    "dump_config",
    "extract_targets",
    "fit_hyperparams",
    "gaussian_density",
    "load_config",
    "mahalanobis_sq",
    "merge_moment",
    "merge_plain_average",
    "next_position",
    "predict",
    "predict_track",
    "prob_detection",
    "prob_in_fov",
    "prune_merge",
    "repulsion_push",
    "run_scenario",
    "sense",
    "step_world",
    "update",
]

__version__ = "0.1.0"
