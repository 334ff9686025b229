"""Local-outlier-factor scoring and the sliding reference window that makes it
work on a live stream.

The score of a query point against a reference set is the classic density
ratio: a point whose local reachability density matches its neighbors scores
about 1, and a point sitting far from everything scores well above 1. The
query is never required to be a member of the reference set; its neighborhood
is computed over reference points only, while each reference point's own
k-distance excludes itself.

Degenerate duplicates: a reference point whose k-th neighbor sits at distance
zero has infinite local density, encoded as an inf sentinel. Ratios then
follow inf/inf = 1 (duplicates among duplicates are normal), finite/inf = 0,
and inf/finite = inf (a lone query next to a mass of duplicates scores
unboundedly suspicious).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Deque, Optional, Sequence, Union

import numpy as np

from .model import FeatureVector, PoseLabel, SuspicionEvent

DEFAULT_NEIGHBOR_COUNT = 10
DEFAULT_THRESHOLD = 1.5
DEFAULT_WINDOW_CAPACITY = 512
DEFAULT_WARMUP_MIN = 32


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class LofConfig:
    """Streaming detector knobs; the threshold is runtime-tunable via control."""

    neighbor_count: int = DEFAULT_NEIGHBOR_COUNT
    threshold: float = DEFAULT_THRESHOLD
    window_capacity: int = DEFAULT_WINDOW_CAPACITY
    warmup_min: int = DEFAULT_WARMUP_MIN

    def __post_init__(self):
        if self.neighbor_count < 1:
            raise ValueError(f"neighbor_count must be >= 1, got {self.neighbor_count}")
        if not self.threshold > 0:
            raise ValueError(f"threshold must be > 0, got {self.threshold}")
        if self.window_capacity < self.neighbor_count + 1:
            raise ValueError(
                f"window_capacity must be >= neighbor_count + 1, got {self.window_capacity}"
            )
        if self.warmup_min < self.neighbor_count + 1:
            raise ValueError(
                f"warmup_min must be >= neighbor_count + 1, got {self.warmup_min}"
            )

    def to_dict(self) -> dict:
        return {
            "neighbor_count": self.neighbor_count,
            "threshold": self.threshold,
            "window_capacity": self.window_capacity,
            "warmup_min": self.warmup_min,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LofConfig":
        return cls(
            neighbor_count=int(obj.get("neighbor_count", DEFAULT_NEIGHBOR_COUNT)),
            threshold=float(obj.get("threshold", DEFAULT_THRESHOLD)),
            window_capacity=int(obj.get("window_capacity", DEFAULT_WINDOW_CAPACITY)),
            warmup_min=int(obj.get("warmup_min", DEFAULT_WARMUP_MIN)),
        )


Points = Union[Sequence[Sequence[float]], np.ndarray]


def _reference_matrix(reference: Points) -> np.ndarray:
    R = np.asarray(
        [p.values if isinstance(p, FeatureVector) else p for p in reference], dtype=float
    )
    if R.ndim != 2:
        raise ValueError("reference must be a 2-d point set")
    return R


def _pairwise_distances(R: np.ndarray) -> np.ndarray:
    # Direct differences keep near-duplicate distances accurate; the gram-matrix
    # shortcut loses digits to cancellation.
    return np.sqrt(((R[:, None, :] - R[None, :, :]) ** 2).sum(axis=2))


def _local_reachability(D: np.ndarray, kdist: np.ndarray) -> np.ndarray:
    """lrd of every reference point from the full self-distance matrix.

    Neighborhoods include every other point within the k-distance (ties keep
    all members); reachability to a neighbor is floored at that neighbor's own
    k-distance. A zero reachability sum means >= k exact duplicates, encoded
    as infinite density.
    """
    n = D.shape[0]
    member = (D <= kdist[:, None]) & ~np.eye(n, dtype=bool)
    reach = np.maximum(kdist[None, :], D)
    counts = member.sum(axis=1).astype(float)
    sums = (reach * member).sum(axis=1)
    lrd = np.full(n, math.inf)
    np.divide(counts, sums, out=lrd, where=sums > 0)
    return lrd


def lof_score(reference: Points, k: int, query: Union[FeatureVector, Sequence[float]]) -> float:
    """Score one query point against a reference set with neighbor count k.

    Requires at least k + 1 reference points. About 1 for points that look
    like the reference, much larger for outliers.
    """
    R = _reference_matrix(reference)
    n = len(R)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k + 1:
        raise InsufficientDataError(f"need at least {k + 1} reference points, got {n}")
    q = np.asarray(query.values if isinstance(query, FeatureVector) else query, dtype=float)

    D = _pairwise_distances(R)
    # Row-sorted distances include self at 0, so index k is the k-th neighbor.
    kdist = np.sort(D, axis=1)[:, k]
    lrd = _local_reachability(D, kdist)

    dq = np.sqrt(((R - q) ** 2).sum(axis=1))
    kdist_q = np.sort(dq)[k - 1]
    neighbors = [j for j in range(n) if dq[j] <= kdist_q]
    reach_q = sum(max(kdist[j], dq[j]) for j in neighbors)
    lrd_q = math.inf if reach_q == 0.0 else len(neighbors) / reach_q

    ratios = []
    for j in neighbors:
        if math.isinf(lrd[j]) and math.isinf(lrd_q):
            ratios.append(1.0)
        elif math.isinf(lrd_q):
            ratios.append(0.0)
        elif math.isinf(lrd[j]):
            ratios.append(math.inf)
        else:
            ratios.append(lrd[j] / lrd_q)
    return float(sum(ratios) / len(ratios))


def lof_scores_batch(reference: Points, k: int, queries: Points) -> list[float]:
    """Score several queries against one reference set."""
    return [lof_score(reference, k, q) for q in _reference_matrix(queries)]


class ReferenceWindow:
    """Bounded FIFO of recent normal feature vectors; eviction is oldest-first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: Deque[FeatureVector] = deque(maxlen=capacity)

    def append(self, feature: FeatureVector) -> None:
        self._items.append(feature)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def contents(self) -> tuple[FeatureVector, ...]:
        return tuple(self._items)

    def matrix(self) -> np.ndarray:
        return np.asarray([f.values for f in self._items], dtype=float)


class StreamingDetector:
    """Per-camera anomaly gate.

    Features are absorbed silently until the window holds ``warmup_min``
    samples. After warmup every feature is scored against the window: scores
    above the threshold emit a SuspicionEvent and the feature is kept OUT of
    the window, so outliers never contaminate the notion of normal; scores at
    or below the threshold fold the feature into the window.
    """

    def __init__(self, config: LofConfig, camera_id: str, zone_id: str):
        self.config = config
        self.camera_id = camera_id
        self.zone_id = zone_id
        self.window = ReferenceWindow(config.window_capacity)
        self.events_emitted = 0
        self.frames_seen = 0

    def set_threshold(self, threshold: float) -> None:
        if not threshold > 0:
            raise ValueError(f"threshold must be > 0, got {threshold}")
        self.config = LofConfig(
            neighbor_count=self.config.neighbor_count,
            threshold=threshold,
            window_capacity=self.config.window_capacity,
            warmup_min=self.config.warmup_min,
        )

    def observe(
        self, feature: FeatureVector, pose_label: Optional[PoseLabel] = None
    ) -> Optional[SuspicionEvent]:
        self.frames_seen += 1
        if len(self.window) < self.config.warmup_min:
            self.window.append(feature)
            return None
        score = lof_score(self.window.matrix(), self.config.neighbor_count, feature)
        if score > self.config.threshold:
            self.events_emitted += 1
            return SuspicionEvent(
                event_id=f"{self.camera_id}-{feature.timestamp}-{self.events_emitted:04d}",
                camera_id=self.camera_id,
                zone_id=self.zone_id,
                timestamp=feature.timestamp,
                anomaly_score=score,
                pose_label=pose_label,
                frame_ref=feature.source_frame,
            )
        self.window.append(feature)
        return None
