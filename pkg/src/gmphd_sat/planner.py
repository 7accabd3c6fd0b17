"""Robot motion strategies: lawnmower coverage and Gaussian-seeking control.

The lawnmower path is a boustrophedon sweep over the world rectangle with a
configured lane spacing, followed by a straight return to the start, repeated
indefinitely. The Gaussian strategies steer toward the mixture component that
is nearest (Euclidean) or has the largest covariance (trace by default). Every
strategy moves at most ``speed`` per step and stays inside the world bounds.
Full FOV coverage requires lane_spacing <= 2 * fov_radius, validated where the
sensor is known (scenario configuration).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .gaussians import Intensity

LAWNMOWER = "lawnmower"
NEAREST_GAUSSIAN = "nearest_gaussian"
LARGEST_GAUSSIAN = "largest_gaussian"
STRATEGIES = (LAWNMOWER, NEAREST_GAUSSIAN, LARGEST_GAUSSIAN)


@dataclass(frozen=True)
class WorldBounds:
    """Axis-aligned world rectangle (meters)."""

    xmin: float = 0.0
    ymin: float = 0.0
    xmax: float = 150.0
    ymax: float = 150.0

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(f"degenerate world bounds: {self}")

    def clamp(self, point: np.ndarray) -> np.ndarray:
        return np.clip(point, [self.xmin, self.ymin], [self.xmax, self.ymax])

    def contains(self, point) -> bool:
        x, y = point
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)


@dataclass(frozen=True)
class RobotState:
    """Sensor platform position (m) and per-step speed (m/step)."""

    position: np.ndarray
    speed: float = 0.5

    def __post_init__(self):
        position = np.array(self.position, dtype=float).reshape(2)
        if self.speed <= 0.0:
            raise ValueError(f"speed must be positive, got {self.speed}")
        position.flags.writeable = False
        object.__setattr__(self, "position", position)


@dataclass(frozen=True)
class PlannerConfig:
    strategy: str = LAWNMOWER
    lane_spacing: float = 50.0
    world: WorldBounds = WorldBounds()
    largest_scalarization: str = "trace"  # or "det"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.lane_spacing <= 0.0:
            raise ValueError(f"lane_spacing must be positive, got {self.lane_spacing}")
        if self.largest_scalarization not in ("trace", "det"):
            raise ValueError(
                f"largest_scalarization must be 'trace' or 'det', "
                f"got {self.largest_scalarization!r}"
            )


class LawnmowerPath:
    """Arc-length parameterized boustrophedon sweep-and-return cycle."""

    def __init__(self, world: WorldBounds, lane_spacing: float):
        xs = list(np.arange(world.xmin, world.xmax + 1e-9, lane_spacing))
        if xs[-1] < world.xmax - 1e-9:
            xs.append(world.xmax)
        pts = []
        for i, x in enumerate(xs):
            lo_hi = (world.ymin, world.ymax) if i % 2 == 0 else (world.ymax, world.ymin)
            pts.append((x, lo_hi[0]))
            pts.append((x, lo_hi[1]))
        pts.append(pts[0])  # return leg to the original position
        self.waypoints = np.array(pts, dtype=float)
        seg = np.diff(self.waypoints, axis=0)
        self._cum = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
        self.cycle_length = float(self._cum[-1])
        self.lane_xs = [float(x) for x in xs]

    @property
    def start(self) -> np.ndarray:
        return self.waypoints[0].copy()

    def position_at(self, arc: float) -> np.ndarray:
        """Point at the given arc length along the repeating cycle."""
        arc = float(arc) % self.cycle_length
        i = int(np.searchsorted(self._cum, arc, side="right")) - 1
        i = min(i, len(self.waypoints) - 2)
        seg_len = self._cum[i + 1] - self._cum[i]
        frac = 0.0 if seg_len == 0.0 else (arc - self._cum[i]) / seg_len
        return self.waypoints[i] + frac * (self.waypoints[i + 1] - self.waypoints[i])


@lru_cache(maxsize=16)
def _cached_path(bounds: tuple[float, float, float, float], spacing: float) -> LawnmowerPath:
    return LawnmowerPath(WorldBounds(*bounds), spacing)


def lawnmower_path(cfg: PlannerConfig) -> LawnmowerPath:
    return _cached_path(cfg.world.as_tuple(), cfg.lane_spacing)


def _move_toward(position: np.ndarray, target: np.ndarray, speed: float) -> np.ndarray:
    offset = target - position
    dist = float(np.hypot(*offset))
    if dist <= speed:
        return target.astype(float, copy=True)
    return position + offset * (speed / dist)


def next_position(
    robot: RobotState, intensity: Intensity, cfg: PlannerConfig, step: int
) -> np.ndarray:
    """Robot position for the next step under the configured strategy.

    Gaussian strategies fall back to the lawnmower waypoint when the mixture is
    empty. The result is at most ``robot.speed`` from the current position and
    clamped to the world bounds.
    """
    strategy = cfg.strategy
    if len(intensity) == 0 and strategy != LAWNMOWER:
        strategy = LAWNMOWER
    if strategy == LAWNMOWER:
        target = lawnmower_path(cfg).position_at((step + 1) * robot.speed)
    elif strategy == NEAREST_GAUSSIAN:
        d = np.hypot(*(intensity.means - robot.position).T)
        target = intensity.means[int(np.argmin(d))]
    else:  # largest_gaussian
        P = intensity.covariances
        if cfg.largest_scalarization == "trace":
            size = P[:, 0, 0] + P[:, 1, 1]
        else:
            size = P[:, 0, 0] * P[:, 1, 1] - P[:, 0, 1] * P[:, 1, 0]
        target = intensity.means[int(np.argmax(size))]
    return cfg.world.clamp(_move_toward(robot.position, np.asarray(target, dtype=float), robot.speed))
