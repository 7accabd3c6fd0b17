"""GM-PHD recursion for a mobile sensor with a limited circular FOV.

Prediction, measurement update with no-detection repulsion, measurement-driven
birth, pruning/merging, and multitarget state extraction. The filter state is
2-d position; measurements are noisy position readings, so the observation
matrix is the identity throughout.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .fov import FovDisk, prob_in_fov_many
from .gaussians import (
    GaussianComponent,
    Intensity,
    _merge_arrays_moment,
    _merge_arrays_plain,
)

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class LinearMotionModel:
    """Linear-Gaussian motion: transition matrix, process noise, survival probability."""

    transition: np.ndarray
    process_noise: np.ndarray
    survival_prob: float = 1.0

    def __post_init__(self):
        F = np.array(self.transition, dtype=float)
        Q = np.array(self.process_noise, dtype=float)
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise ValueError(f"transition must be square, got {F.shape}")
        if Q.shape != F.shape:
            raise ValueError(f"process noise shape {Q.shape} does not match transition {F.shape}")
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-12:
            raise ValueError("process noise must be symmetric")
        # Positive semidefinite is enough: the identity-dynamics case uses Q = 0.
        if np.min(np.linalg.eigvalsh(0.5 * (Q + Q.T))) < -1e-10:
            raise ValueError("process noise must be positive semidefinite")
        if not 0.0 <= self.survival_prob <= 1.0:
            raise ValueError(f"survival_prob must be in [0, 1], got {self.survival_prob}")
        F.flags.writeable = False
        Q.flags.writeable = False
        object.__setattr__(self, "transition", F)
        object.__setattr__(self, "process_noise", Q)


@dataclass(frozen=True)
class SensorModel:
    """Limited-FOV position sensor with Gaussian noise and uniform clutter.

    Clutter is uniform over the FOV disk, so its spatial intensity is
    ``clutter_mean / (pi r^2)`` inside the disk and zero outside.
    """

    fov: FovDisk
    p_detect_given_in: float
    meas_noise: np.ndarray
    clutter_mean: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_detect_given_in <= 1.0:
            raise ValueError(f"p_detect_given_in must be in [0, 1], got {self.p_detect_given_in}")
        R = np.array(self.meas_noise, dtype=float)
        if R.shape != (2, 2):
            raise ValueError(f"measurement noise must be 2x2, got {R.shape}")
        np.linalg.cholesky(0.5 * (R + R.T))
        if self.clutter_mean < 0.0:
            raise ValueError(f"clutter_mean must be >= 0, got {self.clutter_mean}")
        R.flags.writeable = False
        object.__setattr__(self, "meas_noise", R)

    def clutter_intensity(self) -> float:
        """Spatial clutter intensity inside the FOV disk (per m^2)."""
        return self.clutter_mean / self.fov.area()

    def at(self, position) -> "SensorModel":
        """Same sensor with the FOV recentered at ``position``."""
        return SensorModel(
            fov=FovDisk(center=np.asarray(position, dtype=float), radius=self.fov.radius),
            p_detect_given_in=self.p_detect_given_in,
            meas_noise=self.meas_noise,
            clutter_mean=self.clutter_mean,
        )


@dataclass(frozen=True)
class FilterConfig:
    """Thresholds of the GM-PHD recursion."""

    pd_band_low: float = 0.4
    pd_band_high: float = 0.6
    prune_weight: float = 0.001
    merge_threshold: float = 10.0  # squared Mahalanobis gate
    max_components: int = 100
    extract_weight: float = 0.5
    birth_weight: float = 1.0
    merge_rule: str = "moment"  # or "plain_average"

    def __post_init__(self):
        if not 0.0 <= self.pd_band_low <= self.pd_band_high <= 1.0:
            raise ValueError(
                f"need 0 <= pd_band_low <= pd_band_high <= 1, got "
                f"({self.pd_band_low}, {self.pd_band_high})"
            )
        if self.prune_weight >= self.extract_weight:
            raise ValueError(
                f"prune_weight ({self.prune_weight}) must be below "
                f"extract_weight ({self.extract_weight})"
            )
        if self.merge_threshold <= 0.0:
            raise ValueError(f"merge_threshold must be positive, got {self.merge_threshold}")
        if self.max_components < 1:
            raise ValueError(f"max_components must be >= 1, got {self.max_components}")
        if self.birth_weight < 0.0:
            raise ValueError(f"birth_weight must be >= 0, got {self.birth_weight}")
        if self.merge_rule not in ("moment", "plain_average"):
            raise ValueError(f"merge_rule must be 'moment' or 'plain_average', got {self.merge_rule}")


@dataclass(frozen=True)
class TargetEstimate:
    """One extracted target: a heavy component's mean/covariance/weight."""

    mean: np.ndarray
    covariance: np.ndarray
    weight: float

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.covariance, dtype=float)
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


def predict(
    prior: Intensity,
    model: LinearMotionModel,
    gp_overrides: dict[int, tuple[np.ndarray, np.ndarray]] | None = None,
) -> Intensity:
    """Time-propagate every component; optional per-component override predictions.

    Weights scale by the survival probability. Components listed in
    ``gp_overrides`` take the supplied (mean, covariance) with the process
    noise added on top; the rest follow the linear model. Component count is
    unchanged.
    """
    n = len(prior)
    if gp_overrides:
        bad = [i for i in gp_overrides if not 0 <= i < n]
        if bad:
            raise IndexError(f"gp_overrides keys out of range: {bad}")
    if n == 0:
        return prior
    F = model.transition
    Q = model.process_noise
    w = model.survival_prob * prior.weights
    m = prior.means @ F.T
    P = F @ prior.covariances @ F.T + Q
    if gp_overrides:
        for i, (mean_i, cov_i) in gp_overrides.items():
            m[i] = np.asarray(mean_i, dtype=float)
            P[i] = np.asarray(cov_i, dtype=float) + Q
    return Intensity.from_arrays(w, m, P)


def repulsion_push(mean, robot, p_d: float) -> np.ndarray:
    """No-detection mean update: push the mean away from the sensor position.

    Each coordinate moves outward by ``p_d`` times its offset from the robot,
    so the fixed point is the sensor center and the push grows with the
    detection probability.
    """
    mean = np.asarray(mean, dtype=float)
    robot = np.asarray(robot, dtype=float)
    return mean + p_d * (mean - robot)


def update(
    predicted: Intensity,
    measurements,
    sensor: SensorModel,
    cfg: FilterConfig,
    push: bool = True,
    world_bounds=None,
    warn_outside: bool = True,
    prev_measurements=None,
) -> Intensity:
    """GM-PHD measurement update for one scan.

    Produces the no-detection copy of every predicted component (weight scaled
    by 1 - p_D; mean pushed outward on a no-detection event, see below) plus
    one Kalman-updated copy per component per measurement, weighted by the
    clutter-normalized likelihood. Output holds exactly n * (|Z| + 1)
    components; pruning is a separate step.

    The repulsion push fires for components in the detection-probability band
    whose mean lies inside the FOV disk and that experienced a genuine
    no-detection event: no measurement within the component's merge gate this
    scan, nor in the previous scan when ``prev_measurements`` is supplied (a
    single missed scan at band-level p_D is expected half the time and is no
    evidence of absence).

    When ``world_bounds`` is given as ((xmin, ymin), (xmax, ymax)), pushed
    means are clamped into the rectangle (targets never leave the world, so
    belief mass outside it is unsupportable and, near the boundary, would be
    permanently unobservable) and out-of-bounds measurements draw a warning
    unless ``warn_outside`` is false; they are processed either way.
    """
    Z = np.asarray(measurements, dtype=float).reshape(-1, 2)
    lo = hi = None
    if world_bounds is not None:
        (xmin, ymin), (xmax, ymax) = world_bounds
        lo = np.array([xmin, ymin])
        hi = np.array([xmax, ymax])
        if warn_outside and len(Z):
            outside = (Z[:, 0] < xmin) | (Z[:, 0] > xmax) | (Z[:, 1] < ymin) | (Z[:, 1] > ymax)
            if np.any(outside):
                warnings.warn(
                    f"{int(outside.sum())} measurement(s) outside world bounds; processed anyway",
                    stacklevel=2,
                )
    n = len(predicted)
    if n == 0:
        return predicted
    w = predicted.weights
    m = predicted.means
    P = predicted.covariances
    p_d = sensor.p_detect_given_in * prob_in_fov_many(m, P, sensor.fov)

    det_w: list[np.ndarray] = []
    det_m: list[np.ndarray] = []
    min_quad = np.full(n, np.inf)
    P_upd = P
    if len(Z):
        R = sensor.meas_noise
        S = P + R
        chol = np.linalg.cholesky(S)
        gain = np.linalg.solve(S, P).transpose(0, 2, 1)  # P S^-1 with S symmetric
        eye = np.eye(2)
        imk = eye - gain
        P_upd = imk @ P @ imk.transpose(0, 2, 1) + gain @ R @ gain.transpose(0, 2, 1)
        P_upd = 0.5 * (P_upd + P_upd.transpose(0, 2, 1))  # Joseph form, symmetrized
        log_det_s = 2.0 * (np.log(chol[:, 0, 0]) + np.log(chol[:, 1, 1]))
        inv_l00 = 1.0 / chol[:, 0, 0]
        inv_l11 = 1.0 / chol[:, 1, 1]
        kappa = sensor.clutter_intensity()
        for z in Z:
            diff = z - m
            y0 = diff[:, 0] * inv_l00
            y1 = (diff[:, 1] - chol[:, 1, 0] * y0) * inv_l11
            quad = y0 * y0 + y1 * y1
            np.minimum(min_quad, quad, out=min_quad)
            lik = np.exp(-0.5 * quad - 0.5 * log_det_s - _LOG_2PI)
            detection = p_d * w * lik
            denom = kappa + float(np.sum(detection))
            w_z = detection / denom if denom > 0.0 else np.zeros(n)
            det_w.append(w_z)
            det_m.append(m + np.einsum("nij,nj->ni", gain, diff))

    w_miss = (1.0 - p_d) * w
    m_miss = m.copy()
    if push:
        unsupported = min_quad > cfg.merge_threshold
        prev = (
            np.asarray(prev_measurements, dtype=float).reshape(-1, 2)
            if prev_measurements is not None
            else np.zeros((0, 2))
        )
        if len(prev) and np.any(unsupported):
            S_gate = P + sensor.meas_noise
            chol_gate = np.linalg.cholesky(S_gate)
            for z in prev:
                diff = z - m
                y0 = diff[:, 0] / chol_gate[:, 0, 0]
                y1 = (diff[:, 1] - chol_gate[:, 1, 0] * y0) / chol_gate[:, 1, 1]
                unsupported &= (y0 * y0 + y1 * y1) > cfg.merge_threshold
        inside = (
            np.hypot(m[:, 0] - sensor.fov.center[0], m[:, 1] - sensor.fov.center[1])
            <= sensor.fov.radius
        )
        band = (p_d >= cfg.pd_band_low) & (p_d <= cfg.pd_band_high) & unsupported & inside
        if np.any(band):
            pushed = m_miss[band] + p_d[band, None] * (m_miss[band] - sensor.fov.center)
            if lo is not None:
                pushed = np.clip(pushed, lo, hi)
            m_miss[band] = pushed

    out_w = [w_miss] + det_w
    out_m = [m_miss] + det_m
    out_P = [P] + [P_upd] * len(det_w)
    return Intensity.from_arrays(
        np.concatenate(out_w), np.concatenate(out_m), np.concatenate(out_P)
    )


def birth_from_measurements(measurements, sensor: SensorModel, cfg: FilterConfig) -> list[GaussianComponent]:
    """One new component per measurement: mean at the reading, covariance R."""
    Z = np.asarray(measurements, dtype=float).reshape(-1, 2)
    return [GaussianComponent(cfg.birth_weight, z, sensor.meas_noise) for z in Z]


def _merge_pass(
    w: np.ndarray, m: np.ndarray, P: np.ndarray, chol: np.ndarray, cfg: FilterConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One greedy merge sweep; returns survivor arrays sorted by weight."""
    merge_fn = _merge_arrays_moment if cfg.merge_rule == "moment" else _merge_arrays_plain
    alive = np.ones(len(w), dtype=bool)
    masked = w.copy()
    survivors: list[tuple[float, np.ndarray, np.ndarray]] = []
    while np.any(alive) and len(survivors) < cfg.max_components:
        i = int(np.argmax(masked))
        idx = np.nonzero(alive)[0]
        diff = m[idx] - m[i]
        y0 = diff[:, 0] / chol[i, 0, 0]
        y1 = (diff[:, 1] - chol[i, 1, 0] * y0) / chol[i, 1, 1]
        group = idx[y0 * y0 + y1 * y1 <= cfg.merge_threshold]
        survivors.append(merge_fn(w[group], m[group], P[group]))
        alive[group] = False
        masked[group] = -np.inf
    sw = np.array([s[0] for s in survivors])
    order = np.argsort(-sw, kind="stable")
    return (
        sw[order],
        np.stack([survivors[k][1] for k in order]),
        np.stack([survivors[k][2] for k in order]),
    )


def prune_merge(v: Intensity, cfg: FilterConfig) -> Intensity:
    """Drop light components, then greedily merge gated groups around heavy ones.

    Each sweep selects the heaviest remaining candidate, merges every candidate
    within the squared-Mahalanobis gate (measured under the selected
    component's covariance), and removes the group from the pool, stopping when
    the pool is empty or the survivor cap is reached (leftovers are pruned).
    Merging can inflate covariances enough to gate previously separate
    survivors, so sweeps repeat until a sweep changes nothing, making the
    operation idempotent. Output is ordered by descending weight.
    """
    keep = v.weights >= cfg.prune_weight
    if not np.any(keep):
        return Intensity()
    w = v.weights[keep]
    m = v.means[keep]
    P = v.covariances[keep]
    chol = v.cholesky_factors[keep]
    for _ in range(len(w)):
        n_before = len(w)
        w, m, P = _merge_pass(w, m, P, chol, cfg)
        if len(w) == n_before:
            break
        chol = np.linalg.cholesky(P)
    return Intensity.from_arrays(w, m, P)


def extract_targets(v: Intensity, cfg: FilterConfig) -> list[TargetEstimate]:
    """Emit components at or above the extraction weight as target estimates.

    A component heavy enough to stand for several targets (weight >= 1.5) is
    emitted round(weight) times at the same mean, ties at .5 rounding half-up.
    """
    targets: list[TargetEstimate] = []
    for i in range(len(v)):
        weight = float(v.weights[i])
        if weight < cfg.extract_weight:
            continue
        copies = 1 if weight < 1.5 else int(np.floor(weight + 0.5))
        est = TargetEstimate(v.means[i], v.covariances[i], weight)
        targets.extend([est] * copies)
    return targets
