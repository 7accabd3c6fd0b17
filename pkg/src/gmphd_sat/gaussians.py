"""Weighted Gaussian components and the mixture intensity they form.

A component is a weighted Gaussian (weight, mean, covariance); an intensity
is an ordered collection of components whose total weight estimates the
expected number of targets. Covariances are validated by Cholesky at
construction time so downstream algebra can assume positive definiteness.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.linalg import solve_triangular

_SYM_TOL = 1e-12
_LOG_2PI = float(np.log(2.0 * np.pi))


class InvalidComponentError(ValueError):
    """Raised when a component violates its invariants (e.g. non-PD covariance)."""


class EmptyMergeError(ValueError):
    """Raised when a merge is requested over zero components."""


def _validate_cov(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (covariance, cholesky). Symmetrizes once before rejecting."""
    cov = np.array(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidComponentError(f"covariance must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise InvalidComponentError("covariance has non-finite entries")
    if np.max(np.abs(cov - cov.T), initial=0.0) > _SYM_TOL:
        cov = 0.5 * (cov + cov.T)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        cov = 0.5 * (cov + cov.T)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise InvalidComponentError("covariance is not positive definite") from exc
    return cov, chol


class GaussianComponent:
    """One weighted Gaussian: nonnegative weight, mean vector, SPD covariance."""

    __slots__ = ("weight", "mean", "covariance", "_chol")

    def __init__(self, weight: float, mean, covariance):
        weight = float(weight)
        if not np.isfinite(weight) or weight < 0.0:
            raise InvalidComponentError(f"weight must be finite and >= 0, got {weight}")
        mean = np.array(mean, dtype=float).reshape(-1)
        if not np.all(np.isfinite(mean)):
            raise InvalidComponentError("mean has non-finite entries")
        covariance, chol = _validate_cov(covariance)
        if covariance.shape[0] != mean.shape[0]:
            raise InvalidComponentError(
                f"dimension mismatch: mean is {mean.shape[0]}-d, covariance {covariance.shape}"
            )
        mean.flags.writeable = False
        covariance.flags.writeable = False
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", covariance)
        object.__setattr__(self, "_chol", chol)

    def __setattr__(self, name, value):
        raise AttributeError("GaussianComponent is immutable")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def cholesky(self) -> np.ndarray:
        """Lower-triangular Cholesky factor of the covariance."""
        return self._chol

    def __repr__(self) -> str:
        return (
            f"GaussianComponent(weight={self.weight:.6g}, "
            f"mean={np.array2string(self.mean, precision=4)})"
        )


def gaussian_density(x, c: GaussianComponent) -> float | np.ndarray:
    """Multivariate normal density of component ``c`` at ``x`` (weight ignored).

    ``x`` may be a single d-vector or an array of shape (..., d); the result
    matches the leading shape.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    diff = np.atleast_2d(x) - c.mean
    chol = c.cholesky()
    y = solve_triangular(chol, diff.T, lower=True)
    quad = np.einsum("ij,ij->j", y, y)
    log_norm = -0.5 * c.dim * _LOG_2PI - np.sum(np.log(np.diag(chol)))
    out = np.exp(log_norm - 0.5 * quad)
    return float(out[0]) if single else out.reshape(x.shape[:-1])


def mahalanobis_sq(x, c: GaussianComponent) -> float:
    """Squared Mahalanobis distance of ``x`` from the component mean."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = solve_triangular(c.cholesky(), x - c.mean, lower=True)
    return float(y @ y)


def merge_moment(cs: Sequence[GaussianComponent]) -> GaussianComponent:
    """Collapse components into one Gaussian preserving mixture mean and spread.

    The merged weight is the plain sum; mean and covariance are the
    weight-proportional mixture moments, so total weight and the first two
    moments of the mixture are preserved exactly.
    """
    if len(cs) == 0:
        raise EmptyMergeError("cannot merge an empty component list")
    w = np.array([c.weight for c in cs], dtype=float)
    m = np.stack([c.mean for c in cs])
    P = np.stack([c.covariance for c in cs])
    w_tot, mean, cov = _merge_arrays_moment(w, m, P)
    return GaussianComponent(w_tot, mean, cov)


def merge_plain_average(cs: Sequence[GaussianComponent]) -> GaussianComponent:
    """Merge by summing weights and plainly averaging means and covariances."""
    if len(cs) == 0:
        raise EmptyMergeError("cannot merge an empty component list")
    w_tot = float(sum(c.weight for c in cs))
    mean = np.mean([c.mean for c in cs], axis=0)
    cov = np.mean([c.covariance for c in cs], axis=0)
    return GaussianComponent(w_tot, mean, cov)


def _merge_arrays_moment(
    w: np.ndarray, m: np.ndarray, P: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Moment-matching merge over stacked arrays; returns (weight, mean, cov)."""
    w_tot = float(np.sum(w))
    if w_tot > 0.0:
        frac = w / w_tot
    else:
        frac = np.full(len(w), 1.0 / len(w))  # all-zero weights: unweighted average
    mean = frac @ m
    diff = m - mean
    cov = np.einsum("i,ijk->jk", frac, P) + np.einsum("i,ij,ik->jk", frac, diff, diff)
    return w_tot, mean, 0.5 * (cov + cov.T)


def _merge_arrays_plain(
    w: np.ndarray, m: np.ndarray, P: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Plain-average merge over stacked arrays; returns (weight, mean, cov)."""
    return float(np.sum(w)), np.mean(m, axis=0), np.mean(P, axis=0)


class Intensity:
    """Ordered Gaussian mixture approximating the target intensity.

    Backed by stacked arrays (weights, means, covariances) so mixture-wide
    operations vectorize; iteration yields ``GaussianComponent`` views.
    The sum of weights estimates the expected number of targets.
    """

    __slots__ = ("_w", "_m", "_P", "_chol")

    def __init__(self, components: Iterable[GaussianComponent] = ()):
        comps = list(components)
        if comps:
            self._w = np.array([c.weight for c in comps], dtype=float)
            self._m = np.stack([c.mean for c in comps]).astype(float)
            self._P = np.stack([c.covariance for c in comps]).astype(float)
            self._chol = np.stack([c.cholesky() for c in comps]).astype(float)
        else:
            self._w = np.zeros(0)
            self._m = np.zeros((0, 2))
            self._P = np.zeros((0, 2, 2))
            self._chol = np.zeros((0, 2, 2))
        for a in (self._w, self._m, self._P, self._chol):
            a.flags.writeable = False

    @classmethod
    def from_arrays(cls, weights, means, covariances) -> "Intensity":
        """Build and validate an intensity from stacked arrays."""
        w = np.array(weights, dtype=float).reshape(-1)
        n = w.shape[0]
        if n == 0:
            return cls()
        m = np.array(means, dtype=float).reshape(n, -1)
        P = np.array(covariances, dtype=float).reshape(n, m.shape[1], m.shape[1])
        if not (np.all(np.isfinite(w)) and np.all(w >= 0.0)):
            raise InvalidComponentError("weights must be finite and >= 0")
        if not np.all(np.isfinite(m)):
            raise InvalidComponentError("means have non-finite entries")
        asym = np.max(np.abs(P - P.transpose(0, 2, 1)), initial=0.0)
        if asym > _SYM_TOL:
            P = 0.5 * (P + P.transpose(0, 2, 1))
        try:
            chol = np.linalg.cholesky(P)
        except np.linalg.LinAlgError:
            # Find and repair (or reject) the offending components one by one.
            fixed = []
            for i in range(n):
                try:
                    cov_i, chol_i = _validate_cov(P[i])
                except InvalidComponentError as exc:
                    raise InvalidComponentError(f"component {i}: {exc}") from exc
                fixed.append((cov_i, chol_i))
            P = np.stack([f[0] for f in fixed])
            chol = np.stack([f[1] for f in fixed])
        obj = cls.__new__(cls)
        obj._w, obj._m, obj._P, obj._chol = w, m, P, chol
        for a in (w, m, P, chol):
            a.flags.writeable = False
        return obj

    @property
    def weights(self) -> np.ndarray:
        return self._w

    @property
    def means(self) -> np.ndarray:
        return self._m

    @property
    def covariances(self) -> np.ndarray:
        return self._P

    @property
    def cholesky_factors(self) -> np.ndarray:
        return self._chol

    @property
    def dim(self) -> int:
        return self._m.shape[1]

    def total_weight(self) -> float:
        """Expected number of targets represented by the mixture."""
        return float(np.sum(self._w))

    def __len__(self) -> int:
        return self._w.shape[0]

    def __getitem__(self, i: int) -> GaussianComponent:
        return GaussianComponent(self._w[i], self._m[i], self._P[i])

    def __iter__(self) -> Iterator[GaussianComponent]:
        for i in range(len(self)):
            yield self[i]

    def __repr__(self) -> str:
        return f"Intensity(n={len(self)}, total_weight={self.total_weight():.4f})"
