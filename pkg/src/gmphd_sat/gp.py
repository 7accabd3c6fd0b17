"""Per-dimension Gaussian-process regression over track histories.

Each coordinate of a track is regressed against time with a squared-exponential
kernel and a constant-mean prior (implemented by centering), yielding
extrapolated positions with per-dimension predictive variance for the filter's
prediction step. Hyperparameters are learned offline by maximizing the log
marginal likelihood over a log-scale grid with coordinate refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_LOG_2PI = float(np.log(2.0 * np.pi))
_JITTER_FACTOR = 1e-8


class GpError(ValueError):
    """Raised for degenerate training sets or unrecoverably singular kernels."""


@dataclass(frozen=True)
class GpHyperparams:
    """Squared-exponential kernel parameters (variances in m^2, scale in steps)."""

    signal_variance: float
    length_scale: float
    noise_variance: float

    def __post_init__(self):
        if not self.signal_variance > 0.0:
            raise ValueError(f"signal_variance must be > 0, got {self.signal_variance}")
        if not self.length_scale > 0.0:
            raise ValueError(f"length_scale must be > 0, got {self.length_scale}")
        if self.noise_variance < 0.0:
            raise ValueError(f"noise_variance must be >= 0, got {self.noise_variance}")


@dataclass(frozen=True)
class HyperparamBounds:
    """Search box for hyperparameter fitting, as (low, high) pairs."""

    signal_variance: tuple[float, float] = (1e-4, 1e4)
    length_scale: tuple[float, float] = (0.5, 500.0)
    noise_variance: tuple[float, float] = (1e-8, 100.0)


def _se_kernel(t_a: np.ndarray, t_b: np.ndarray, hp: GpHyperparams) -> np.ndarray:
    d = t_a[:, None] - t_b[None, :]
    return hp.signal_variance * np.exp(-0.5 * (d / hp.length_scale) ** 2)


def _factorize(times: np.ndarray, hp: GpHyperparams) -> np.ndarray:
    """Cholesky of K + noise*I, with one jitter retry for ill-conditioned kernels."""
    K = _se_kernel(times, times, hp)
    K[np.diag_indices_from(K)] += hp.noise_variance
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        K[np.diag_indices_from(K)] += _JITTER_FACTOR * hp.signal_variance
        try:
            return np.linalg.cholesky(K)
        except np.linalg.LinAlgError as exc:
            raise GpError("kernel matrix singular even after jitter") from exc


def log_marginal_likelihood(times, values, hp: GpHyperparams) -> float:
    """GP log marginal likelihood of centered values under the SE kernel."""
    times = np.asarray(times, dtype=float).reshape(-1)
    values = np.asarray(values, dtype=float).reshape(-1)
    y = values - np.mean(values)
    chol = _factorize(times, hp)
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, y))
    n = len(y)
    return float(-0.5 * (y @ alpha) - np.sum(np.log(np.diag(chol))) - 0.5 * n * _LOG_2PI)


def hyperparam_grid(
    bounds: HyperparamBounds | None = None, points_per_axis: int = 8
) -> list[GpHyperparams]:
    """Deterministic log-scale search grid spanning the bounds box."""
    bounds = bounds or HyperparamBounds()
    axes = [
        np.geomspace(lo, hi, points_per_axis)
        for lo, hi in (bounds.signal_variance, bounds.length_scale, bounds.noise_variance)
    ]
    return [
        GpHyperparams(float(sv), float(ls), float(nv))
        for sv in axes[0]
        for ls in axes[1]
        for nv in axes[2]
    ]


def _coordinate_refine(
    times: np.ndarray,
    values: np.ndarray,
    start: GpHyperparams,
    bounds: HyperparamBounds,
    best_lml: float,
    spacing: float,
    rounds: int = 12,
) -> tuple[GpHyperparams, float]:
    """Coordinate descent on a shrinking log-scale stencil around ``start``."""
    current = [start.signal_variance, start.length_scale, start.noise_variance]
    boxes = [bounds.signal_variance, bounds.length_scale, bounds.noise_variance]
    step = spacing
    for _ in range(rounds):
        improved = False
        for axis in range(3):
            for factor in (1.0 / step, step):
                trial = list(current)
                trial[axis] = float(np.clip(trial[axis] * factor, *boxes[axis]))
                if trial[axis] == current[axis]:
                    continue
                try:
                    lml = log_marginal_likelihood(
                        times, values, GpHyperparams(*trial)
                    )
                except GpError:
                    continue
                if lml > best_lml:
                    best_lml = lml
                    current = trial
                    improved = True
        if not improved:
            step = np.sqrt(step)
            if step < 1.02:
                break
    return GpHyperparams(*current), best_lml


def fit_hyperparams(trainset, bounds: HyperparamBounds | None = None) -> GpHyperparams:
    """Maximize the log marginal likelihood over a log-scale grid.

    Scans the full coarse grid, then refines the best point by coordinate
    search; the result therefore dominates every coarse grid point.
    Deterministic for a fixed grid.
    """
    data = np.asarray(trainset, dtype=float).reshape(-1, 2)
    if len(data) < 5:
        raise GpError(f"need at least 5 training samples, got {len(data)}")
    times, values = data[:, 0], data[:, 1]
    if np.ptp(times) == 0.0:
        raise GpError("degenerate training set: all sample times are equal")
    bounds = bounds or HyperparamBounds()
    grid = hyperparam_grid(bounds)
    best_hp = None
    best_lml = -np.inf
    for hp in grid:
        try:
            lml = log_marginal_likelihood(times, values, hp)
        except GpError:
            continue
        if lml > best_lml:
            best_lml = lml
            best_hp = hp
    if best_hp is None:
        raise GpError("no grid point produced a usable kernel")
    spacing = (bounds.length_scale[1] / bounds.length_scale[0]) ** (1.0 / 7)
    refined, _ = _coordinate_refine(times, values, best_hp, bounds, best_lml, np.sqrt(spacing))
    return refined


class GpModel:
    """Per-dimension GP over a training window of (time, coordinate) pairs.

    ``windows[i]`` is an (n_i, 2) array whose first column holds strictly
    increasing times; prediction requires at least two samples per dimension.
    """

    def __init__(self, hyperparams, windows):
        hyperparams = tuple(hyperparams)
        windows = tuple(np.asarray(wdw, dtype=float).reshape(-1, 2) for wdw in windows)
        if len(hyperparams) != len(windows):
            raise GpError(
                f"{len(hyperparams)} hyperparameter sets for {len(windows)} windows"
            )
        for wdw in windows:
            if np.any(np.diff(wdw[:, 0]) <= 0.0):
                raise GpError("window times must be strictly increasing")
        self.hyperparams = hyperparams
        self.windows = windows

    @property
    def dim(self) -> int:
        return len(self.windows)

    @classmethod
    def from_track_window(cls, times, coords, hyperparams) -> "GpModel":
        """Shared-time window: ``coords`` is (n, d), one GP per column."""
        times = np.asarray(times, dtype=float).reshape(-1)
        coords = np.asarray(coords, dtype=float)
        return cls(
            hyperparams,
            [np.column_stack([times, coords[:, j]]) for j in range(coords.shape[1])],
        )


def predict_track(model: GpModel, horizon: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Posterior mean and variance per dimension for the next ``horizon`` steps.

    Returns, for each step h = 1..horizon past the last training time, a pair
    of d-vectors (mean, variance); the filter consumes diag(variance) as the
    predicted covariance. Predictive variance includes the noise term.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    d = model.dim
    means = np.zeros((horizon, d))
    variances = np.zeros((horizon, d))
    for j in range(d):
        window = model.windows[j]
        if len(window) < 2:
            raise GpError(f"dimension {j}: need at least 2 window samples to predict")
        hp = model.hyperparams[j]
        times, values = window[:, 0], window[:, 1]
        center = float(np.mean(values))
        chol = _factorize(times, hp)
        alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, values - center))
        t_star = times[-1] + np.arange(1, horizon + 1, dtype=float)
        k_star = _se_kernel(times, t_star, hp)
        means[:, j] = center + k_star.T @ alpha
        v = np.linalg.solve(chol, k_star)
        latent = hp.signal_variance - np.einsum("ij,ij->j", v, v)
        variances[:, j] = np.maximum(latent, 0.0) + hp.noise_variance
    return [(means[h], variances[h]) for h in range(horizon)]
