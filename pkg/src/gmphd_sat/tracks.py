"""Persistent ID'd tracks over per-step target estimates.

Each step's extracted targets are gated against live tracks by squared
Mahalanobis distance under the track's latest covariance. The closest in-gate
target extends a track's history; extra in-gate targets spawn new tracks, and
ungated targets start fresh tentative tracks. Tracks confirm once their life
length reaches the threshold and retire after coasting unassociated too long.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .filter import TargetEstimate

TENTATIVE = "tentative"
CONFIRMED = "confirmed"


@dataclass(frozen=True)
class TrackConfig:
    """Track maintenance thresholds.

    ``gate`` is a squared-Mahalanobis association gate, by convention the same
    value as the filter's merge threshold. ``max_coast`` is the number of
    consecutive unassociated steps a track survives before retirement.
    """

    l_threshold: int = 3
    gate: float = 10.0
    max_coast: int = 10

    def __post_init__(self):
        if self.l_threshold < 1:
            raise ValueError(f"l_threshold must be >= 1, got {self.l_threshold}")
        if self.gate <= 0.0:
            raise ValueError(f"gate must be positive, got {self.gate}")
        if self.max_coast < 1:
            raise ValueError(f"max_coast must be >= 1, got {self.max_coast}")


@dataclass
class Track:
    """One target's ID'd state history with tentative/confirmed status."""

    id: int
    history: list[tuple[int, np.ndarray, np.ndarray]] = field(default_factory=list)
    status: str = TENTATIVE
    coast_count: int = 0
    last_weight: float = 0.0

    @property
    def life_length(self) -> int:
        return len(self.history)

    @property
    def latest_step(self) -> int:
        return self.history[-1][0]

    @property
    def latest_mean(self) -> np.ndarray:
        return self.history[-1][1]

    @property
    def latest_covariance(self) -> np.ndarray:
        return self.history[-1][2]

    def extend(self, step: int, mean: np.ndarray, cov: np.ndarray, weight: float) -> None:
        if self.history and step <= self.latest_step:
            raise ValueError(
                f"track {self.id}: history times must increase "
                f"(got step {step} after {self.latest_step})"
            )
        self.history.append((step, np.array(mean, dtype=float), np.array(cov, dtype=float)))
        self.coast_count = 0
        self.last_weight = float(weight)

    def refresh_status(self, cfg: TrackConfig) -> None:
        self.status = CONFIRMED if self.life_length >= cfg.l_threshold else TENTATIVE


def _new_track(
    track_id: int, step: int, target: TargetEstimate, cfg: TrackConfig
) -> Track:
    t = Track(id=track_id)
    t.extend(step, target.mean, target.covariance, target.weight)
    t.refresh_status(cfg)
    return t


def associate(
    tracks: list[Track],
    targets: list[TargetEstimate],
    cfg: TrackConfig,
    time: int,
    id_counter: "itertools.count[int] | None" = None,
) -> list[Track]:
    """Assign targets to live tracks and return the updated live set.

    Every target goes to the in-gate track with the smallest squared
    Mahalanobis distance (under the track's latest covariance; ties to the
    lower id). Per track, the nearest assigned target extends the history and
    any additional assigned targets spawn new tracks. Ungated targets start new
    tentative tracks. Tracks receiving nothing coast and retire after
    ``max_coast`` consecutive misses. IDs are never reused within a run when
    the caller threads the same ``id_counter`` through every call.
    """
    tracks = sorted(tracks, key=lambda t: t.id)
    if id_counter is None:
        id_counter = itertools.count(max((t.id for t in tracks), default=-1) + 1)

    order = sorted(range(len(targets)), key=lambda k: -targets[k].weight)
    assigned: dict[int, int | None] = {}
    dist: dict[int, float] = {}
    if tracks and targets:
        latest_m = np.stack([t.latest_mean for t in tracks])
        latest_P = np.stack([t.latest_covariance for t in tracks])
        chol = np.linalg.cholesky(latest_P)
        tgt_m = np.stack([t.mean for t in targets])
        diff = tgt_m[None, :, :] - latest_m[:, None, :]  # (n_tracks, n_targets, 2)
        y0 = diff[:, :, 0] / chol[:, 0, 0][:, None]
        y1 = (diff[:, :, 1] - chol[:, 1, 0][:, None] * y0) / chol[:, 1, 1][:, None]
        d2 = y0 * y0 + y1 * y1
        for k in range(len(targets)):
            col = d2[:, k]
            i = int(np.argmin(col))  # tracks are id-sorted, so ties go to lower id
            if col[i] <= cfg.gate:
                assigned[k] = i
                dist[k] = float(col[i])
            else:
                assigned[k] = None
    else:
        assigned = {k: None for k in range(len(targets))}

    extender: dict[int, int] = {}  # track index -> target index
    for k in order:
        i = assigned[k]
        if i is None:
            continue
        if i not in extender or dist[k] < dist[extender[i]]:
            extender[i] = k

    out = list(tracks)
    extended = set()
    for k in order:
        i = assigned[k]
        tgt = targets[k]
        if i is not None and extender[i] == k:
            tracks[i].extend(time, tgt.mean, tgt.covariance, tgt.weight)
            extended.add(i)
        else:
            # Extra in-gate target on a taken track, or no gated track at all.
            out.append(_new_track(next(id_counter), time, tgt, cfg))

    survivors = []
    for i, t in enumerate(tracks):
        if i not in extended:
            t.coast_count += 1
            if t.coast_count >= cfg.max_coast:
                continue
        survivors.append(t)
    survivors.extend(out[len(tracks):])

    for t in survivors:
        t.refresh_status(cfg)
    return sorted(survivors, key=lambda t: t.id)


def confirmed_tracks(tracks: list[Track]) -> list[Track]:
    """Confirmed subset, ordered by id."""
    return sorted((t for t in tracks if t.status == CONFIRMED), key=lambda t: t.id)
