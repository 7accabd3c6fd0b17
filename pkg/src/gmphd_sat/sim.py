"""Ground-truth world, sensing, per-step pipeline, and run metrics.

One simulation step, in order: the planner moves the robot, the world steps,
the sensor scans (detections plus clutter), the filter predicts (GP
extrapolation for components matched to confirmed tracks), updates with the
optional no-detection repulsion, prunes/merges, appends measurement births,
extracts targets, and the track layer associates them. Runs are deterministic
for a fixed seed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .filter import (
    FilterConfig,
    LinearMotionModel,
    SensorModel,
    birth_from_measurements,
    extract_targets,
    predict,
    prune_merge,
    update,
)
from .fov import FovDisk
from .gaussians import Intensity
from .gp import GpHyperparams, _factorize, _se_kernel, fit_hyperparams
from .planner import RobotState, WorldBounds, lawnmower_path, next_position
from .tracks import CONFIRMED, Track, associate, confirmed_tracks

# A GP override applies only to the component that extended the track last
# step; between steps that component can drift by at most a Kalman innovation
# plus a merge shift, so anything farther is a different lineage.
_GP_OWN_COMPONENT_RADIUS = 3.0


@dataclass
class GroundTruthTarget:
    """True target: position, per-step speed, heading, heading-change period."""

    position: np.ndarray
    speed: float = 0.05
    heading: float = 0.0
    direction_period: int = 400

    def __post_init__(self):
        self.position = np.array(self.position, dtype=float).reshape(2)


@dataclass(frozen=True)
class MetricsRecord:
    """Per-step summary statistics; distances are None when undefined."""

    step: int
    n_components: int
    n_confirmed: int
    sum_w_components: float
    sum_w_tracks: float
    mahal_closest: float | None
    mahal_second: float | None


@dataclass
class StepLog:
    """Raw per-step events: robot position, measurements, true positions."""

    step: int
    robot: np.ndarray
    measurements: np.ndarray
    truth: np.ndarray


@dataclass
class TrackSnapshot:
    """Compact per-step view of the live track set, for logging."""

    step: int
    ids: np.ndarray  # (n,)
    states: np.ndarray  # (n, 5): x, y, p_xx, p_xy, p_yy
    confirmed: np.ndarray  # (n,) bool


@dataclass
class RunResult:
    metrics: list[MetricsRecord]
    tracks: list[Track]
    step_logs: list[StepLog]
    track_snapshots: list[TrackSnapshot]
    worst_confirmed_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))


def step_world(
    targets: list[GroundTruthTarget],
    rng: np.random.Generator,
    step: int,
    world: WorldBounds,
    stationary: bool = False,
) -> list[GroundTruthTarget]:
    """Advance targets one step; headings change periodically and at walls."""
    if stationary:
        return targets
    for t in targets:
        if step > 0 and step % t.direction_period == 0:
            t.heading = float(rng.uniform(0.0, 2.0 * np.pi))
        for _ in range(100):
            move = t.speed * np.array([np.cos(t.heading), np.sin(t.heading)])
            if world.contains(t.position + move):
                t.position = t.position + move
                break
            t.heading = float(rng.uniform(0.0, 2.0 * np.pi))
    return targets


def sense(
    targets: list[GroundTruthTarget],
    sensor: SensorModel,
    clutter_rate: float,
    rng: np.random.Generator,
    clutter_model: str = "bernoulli",
) -> np.ndarray:
    """One scan: noisy detections of in-FOV targets plus uniform disk clutter.

    Each target inside the FOV disk is detected independently with the
    sensor's conditional detection probability; detections carry additive
    Gaussian noise. Clutter count is Bernoulli(rate) by default or
    Poisson(rate), spatially uniform over the disk. Measurements carry no
    identities.
    """
    out = []
    chol_noise = np.linalg.cholesky(sensor.meas_noise)
    center = sensor.fov.center
    radius = sensor.fov.radius
    for t in targets:
        if np.hypot(*(t.position - center)) <= radius:
            if rng.uniform() < sensor.p_detect_given_in:
                out.append(t.position + chol_noise @ rng.standard_normal(2))
    if clutter_model == "bernoulli":
        n_clutter = 1 if rng.uniform() < clutter_rate else 0
    else:
        n_clutter = int(rng.poisson(clutter_rate))
    for _ in range(n_clutter):
        rad = radius * np.sqrt(rng.uniform())
        ang = rng.uniform(0.0, 2.0 * np.pi)
        out.append(center + rad * np.array([np.cos(ang), np.sin(ang)]))
    return np.array(out).reshape(-1, 2)


def initial_belief(
    cfg: ScenarioConfig, targets: list[GroundTruthTarget], rng: np.random.Generator
) -> Intensity:
    """Initial mixture: unit-weight components near (a subset of) true targets.

    Component means sit a uniform-direction offset (mean magnitude per config)
    from true positions with a broad diagonal covariance. The under-estimate
    seeds half the targets; the over-estimate adds half again as uniform
    decoys over the world.
    """
    n = len(targets)
    positions = [t.position for t in targets]
    if cfg.initial_estimate == "under":
        chosen = rng.choice(n, size=max(1, n // 2), replace=False)
        positions = [positions[i] for i in sorted(chosen)]
    means = []
    for pos in positions:
        ang = rng.uniform(0.0, 2.0 * np.pi)
        mag = rng.uniform(0.0, 2.0 * cfg.initial_offset_mean)
        means.append(pos + mag * np.array([np.cos(ang), np.sin(ang)]))
    if cfg.initial_estimate == "over":
        w = cfg.world
        for _ in range(max(1, n // 2)):
            means.append(rng.uniform([w.xmin, w.ymin], [w.xmax, w.ymax]))
    k = len(means)
    return Intensity.from_arrays(
        np.ones(k), np.array(means), np.tile(cfg.initial_cov * np.eye(2), (k, 1, 1))
    )


class _GpCache:
    """Per-track GP factorizations over measurement-anchored history windows."""

    def __init__(self, hyperparams: tuple[GpHyperparams, GpHyperparams], window: int):
        self.hyperparams = hyperparams
        self.window = window
        self._entries: dict[int, dict] = {}

    def _factorization(self, track: Track, anchor_life: int) -> dict:
        entry = self._entries.get(track.id)
        if entry is not None and entry["anchor_life"] == anchor_life:
            return entry
        history = track.history[:anchor_life][-self.window :]
        times = np.array([h[0] for h in history], dtype=float)
        coords = np.stack([h[1] for h in history])
        entry = {"anchor_life": anchor_life, "times": times, "dims": []}
        for j, hp in enumerate(self.hyperparams):
            y = coords[:, j]
            center = float(np.mean(y))
            chol = _factorize(times, hp)
            alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, y - center))
            entry["dims"].append((hp, center, chol, alpha))
        self._entries[track.id] = entry
        return entry

    def predict(
        self, track: Track, anchor_life: int, t_target: float
    ) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at absolute time ``t_target``."""
        entry = self._factorization(track, anchor_life)
        times = entry["times"]
        t_star = np.array([float(t_target)])
        mean = np.zeros(2)
        var = np.zeros(2)
        for j, (hp, center, chol, alpha) in enumerate(entry["dims"]):
            k_star = _se_kernel(times, t_star, hp)[:, 0]
            mean[j] = center + k_star @ alpha
            v = np.linalg.solve(chol, k_star)
            var[j] = max(hp.signal_variance - v @ v, 0.0) + hp.noise_variance
        return mean, var

    def drop_dead(self, live_ids: set[int]) -> None:
        for tid in list(self._entries):
            if tid not in live_ids:
                del self._entries[tid]


def _gp_overrides(
    intensity: Intensity,
    tracks: list[Track],
    step: int,
    cache: _GpCache,
    anchors: dict[int, tuple[int, int]],
) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Extrapolate each confirmed track's own lineage component with the GP.

    The GP trains only on history up to the track's measurement anchor (the
    last entry corroborated by a gated measurement) and extrapolates at the
    horizon since that contact: coasting belief mean-reverts with growing
    variance instead of integrating its own predictions. The override variance
    is floored at the component's own variance, so extrapolation can only add
    uncertainty.
    """
    if len(intensity) == 0:
        return {}
    overrides: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    claimed: set[int] = set()
    means = intensity.means
    for track in confirmed_tracks(tracks):
        anchor_life, anchor_step = anchors.get(track.id, (0, -1))
        if anchor_life < 2 or step <= anchor_step:
            continue
        diff = means - track.latest_mean
        d_euclid = np.hypot(diff[:, 0], diff[:, 1])
        i = int(np.argmin(d_euclid))
        # Only the track's own lineage component, which extended the track one
        # step ago and can have drifted at most a Kalman/merge shift since; a
        # farther component belongs to someone else and must not be dragged.
        if i in claimed or d_euclid[i] > _GP_OWN_COMPONENT_RADIUS:
            continue
        mean, var = cache.predict(track, anchor_life, float(step))
        var = np.maximum(var, np.diag(intensity.covariances[i]))
        overrides[i] = (mean, np.diag(var))
        claimed.add(i)
    return overrides


def compute_metrics(
    truth: np.ndarray, tracks: list[Track], intensity: Intensity, step: int
) -> MetricsRecord:
    """Per-step metrics: counts, weight sums, and truth-to-track distances.

    Distances are Mahalanobis (square root) from each true target to its
    closest and second-closest confirmed tracks, under each track's latest
    covariance, averaged over targets; absent (None) when there are no (or
    fewer than two) confirmed tracks.
    """
    confirmed = confirmed_tracks(tracks)
    sum_w_tracks = float(sum(t.last_weight for t in confirmed))
    closest = second = None
    if confirmed and len(truth):
        latest_m = np.stack([t.latest_mean for t in confirmed])
        chol = np.linalg.cholesky(np.stack([t.latest_covariance for t in confirmed]))
        diff = truth[None, :, :] - latest_m[:, None, :]  # (tracks, targets, 2)
        y0 = diff[:, :, 0] / chol[:, 0, 0][:, None]
        y1 = (diff[:, :, 1] - chol[:, 1, 0][:, None] * y0) / chol[:, 1, 1][:, None]
        dist = np.sqrt(y0 * y0 + y1 * y1)
        dist.sort(axis=0)
        closest = float(np.mean(dist[0]))
        if len(confirmed) >= 2:
            second = float(np.mean(dist[1]))
    return MetricsRecord(
        step=step,
        n_components=len(intensity),
        n_confirmed=len(confirmed),
        sum_w_components=intensity.total_weight(),
        sum_w_tracks=sum_w_tracks,
        mahal_closest=closest,
        mahal_second=second,
    )


def _concat(intensity: Intensity, births: list) -> Intensity:
    if not births:
        return intensity
    bw = np.array([b.weight for b in births])
    bm = np.stack([b.mean for b in births])
    bP = np.stack([b.covariance for b in births])
    if len(intensity) == 0:
        return Intensity.from_arrays(bw, bm, bP)
    return Intensity.from_arrays(
        np.concatenate([intensity.weights, bw]),
        np.concatenate([intensity.means, bm]),
        np.concatenate([intensity.covariances, bP]),
    )


def _resolve_gp_hyperparams(cfg: ScenarioConfig) -> tuple[GpHyperparams, GpHyperparams]:
    """Per-dimension hyperparameters: from the training file if given, else config."""
    if cfg.gp.training_file:
        data = np.loadtxt(cfg.gp.training_file, delimiter=",")
        if data.ndim != 2 or data.shape[1] != 3:
            raise ValueError(
                f"GP training file must have columns t,x,y: {cfg.gp.training_file}"
            )
        return (
            fit_hyperparams(data[:, [0, 1]]),
            fit_hyperparams(data[:, [0, 2]]),
        )
    hp = GpHyperparams(cfg.gp.signal_variance, cfg.gp.length_scale, cfg.gp.noise_variance)
    return (hp, hp)


def run_scenario(cfg: ScenarioConfig, keep_logs: bool = True) -> RunResult:
    """Run the full per-step pipeline for the configured number of steps.

    Deterministic for a fixed seed. ``keep_logs=False`` skips the event log
    and track snapshots to save memory in large batch sweeps; metrics and the
    final track set are always produced.
    """
    rng = np.random.default_rng(cfg.seed)
    world = cfg.world
    targets = [
        GroundTruthTarget(
            position=rng.uniform([world.xmin, world.ymin], [world.xmax, world.ymax]),
            speed=cfg.targets.speed,
            heading=float(rng.uniform(0.0, 2.0 * np.pi)),
            direction_period=cfg.targets.direction_period,
        )
        for _ in range(cfg.targets.count)
    ]
    intensity = initial_belief(cfg, targets, rng)

    planner_cfg = cfg.planner_config()
    robot = RobotState(
        position=lawnmower_path(planner_cfg).start, speed=cfg.planner.speed
    )
    base_sensor = SensorModel(
        fov=FovDisk(center=robot.position, radius=cfg.sensor.fov_radius),
        p_detect_given_in=cfg.sensor.p_detect_given_in_fov,
        meas_noise=cfg.sensor.meas_noise_std**2 * np.eye(2),
        clutter_mean=cfg.clutter_rate,
    )
    motion = LinearMotionModel(
        np.eye(2), cfg.motion.process_noise * np.eye(2), cfg.motion.survival_prob
    )
    filter_cfg: FilterConfig = cfg.filter
    # "auto" engages GP extrapolation only for moving targets with offline-fit
    # hyperparameters: track histories of slow targets are noise-dominated, so
    # extrapolating with guessed kernel parameters degrades tracking, while
    # the identity model's process noise already covers the per-step motion.
    gp_on = cfg.gp.enabled is True or (
        cfg.gp.enabled == "auto"
        and not cfg.targets.stationary
        and cfg.gp.training_file is not None
    )
    gp_cache = _GpCache(_resolve_gp_hyperparams(cfg), cfg.gp.window) if gp_on else None

    tracks: list[Track] = []
    id_counter = itertools.count()
    metrics: list[MetricsRecord] = []
    step_logs: list[StepLog] = []
    snapshots: list[TrackSnapshot] = []
    worst_trace = np.full(cfg.steps, np.nan)
    # Track id -> (history length, step) at the last measurement-backed entry.
    gp_anchors: dict[int, tuple[int, int]] = {}

    for step in range(cfg.steps):
        robot = RobotState(
            position=next_position(robot, intensity, planner_cfg, step),
            speed=cfg.planner.speed,
        )
        targets = step_world(targets, rng, step, world, cfg.targets.stationary)
        sensor = base_sensor.at(robot.position)
        measurements = sense(targets, sensor, cfg.clutter_rate, rng, cfg.clutter_model)

        overrides = (
            _gp_overrides(intensity, tracks, step, gp_cache, gp_anchors)
            if gp_cache is not None
            else None
        )
        predicted = predict(intensity, motion, overrides)
        updated = update(
            predicted,
            measurements,
            sensor,
            filter_cfg,
            push=cfg.push_enabled,
            world_bounds=((world.xmin, world.ymin), (world.xmax, world.ymax)),
            warn_outside=False,
        )
        births = birth_from_measurements(measurements, sensor, filter_cfg)
        # Births enter before pruning so a birth near existing mass merges into
        # it immediately; extraction then reads a fully pruned/merged mixture.
        intensity = prune_merge(_concat(updated, births), filter_cfg)
        estimates = extract_targets(intensity, filter_cfg)
        tracks = associate(tracks, estimates, cfg.tracks, step, id_counter)
        if gp_cache is not None:
            live = {t.id for t in tracks}
            gp_cache.drop_dead(live)
            for tid in [k for k in gp_anchors if k not in live]:
                del gp_anchors[tid]
            # Advance a track's anchor when its newest entry is corroborated
            # by a measurement inside the association gate.
            for t in tracks:
                if t.latest_step != step:
                    continue
                if len(measurements):
                    gate_cov = t.latest_covariance + base_sensor.meas_noise
                    chol_g = np.linalg.cholesky(gate_cov)
                    diff = measurements - t.latest_mean
                    y = np.linalg.solve(chol_g[None, :, :], diff[:, :, None])[:, :, 0]
                    if float(np.min(np.einsum("ij,ij->i", y, y))) <= cfg.tracks.gate:
                        gp_anchors[t.id] = (t.life_length, step)

        truth = np.stack([t.position for t in targets])
        metrics.append(compute_metrics(truth, tracks, intensity, step))
        confirmed = [t for t in tracks if t.status == CONFIRMED]
        if confirmed:
            worst_trace[step] = max(
                float(t.latest_covariance[0, 0] + t.latest_covariance[1, 1])
                for t in confirmed
            )
        if keep_logs:
            step_logs.append(
                StepLog(step=step, robot=robot.position.copy(), measurements=measurements, truth=truth)
            )
            if tracks:
                states = np.array(
                    [
                        [
                            t.latest_mean[0],
                            t.latest_mean[1],
                            t.latest_covariance[0, 0],
                            t.latest_covariance[0, 1],
                            t.latest_covariance[1, 1],
                        ]
                        for t in tracks
                    ]
                )
                snapshots.append(
                    TrackSnapshot(
                        step=step,
                        ids=np.array([t.id for t in tracks]),
                        states=states,
                        confirmed=np.array([t.status == CONFIRMED for t in tracks]),
                    )
                )

    return RunResult(
        metrics=metrics,
        tracks=tracks,
        step_logs=step_logs,
        track_snapshots=snapshots,
        worst_confirmed_trace=worst_trace,
    )
