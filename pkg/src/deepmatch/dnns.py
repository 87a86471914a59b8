"""Dense nearest-neighbor search: mutual l2 matching with a ratio test.

Descriptors are the per-cell channel fibers of a feature map, l2-normalized
on read (the zero vector stays zero).  A pair (a, b) is emitted iff b is a's
nearest neighbor, a is b's nearest neighbor, and both directions pass the
ratio test d1/d2 <= r.  Degenerate 0/0 ratios count as 1 and therefore fail
any threshold below 1; a singleton candidate set has d2 = +inf and ratio 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .core import FeatureMap, GridMatch, GridPoint, MatchSet
from .errors import ChannelMismatch, EmptyCandidates

_TILE = 128  # rows/cols per distance-matrix tile; bounds peak memory


@dataclass(frozen=True)
class RatioThreshold:
    """Lowe-style ratio threshold in (0, 1]; 1.0 disables the test."""

    value: float

    def __post_init__(self):
        if not 0.0 < self.value <= 1.0:
            raise ValueError(f"ratio threshold must be in (0, 1], got {self.value}")


NO_RATIO_TEST = RatioThreshold(1.0)


def normalize_rows(desc: np.ndarray) -> np.ndarray:
    """l2-normalize each row; all-zero rows are left as zero."""
    norms = np.linalg.norm(desc, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return desc / norms


@dataclass(frozen=True)
class DescriptorView:
    """A set of grid cells of one feature map exposed as unit descriptors."""

    feature_map: FeatureMap
    points: tuple[GridPoint, ...]

    def __post_init__(self):
        fm = self.feature_map
        for p in self.points:
            if p.layer != fm.layer or not (0 <= p.row < fm.rows and 0 <= p.col < fm.cols):
                raise ValueError(f"point {p} outside feature map")

    @classmethod
    def full_grid(cls, fmap: FeatureMap) -> "DescriptorView":
        pts = tuple(
            GridPoint(r, c, fmap.layer)
            for r in range(fmap.rows)
            for c in range(fmap.cols)
        )
        return cls(feature_map=fmap, points=pts)

    @cached_property
    def descriptors(self) -> np.ndarray:
        """(N, C) float32 array of l2-normalized channel fibers."""
        rows = np.fromiter((p.row for p in self.points), dtype=np.intp,
                           count=len(self.points))
        cols = np.fromiter((p.col for p in self.points), dtype=np.intp,
                           count=len(self.points))
        desc = self.feature_map.data[:, rows, cols].T.astype(np.float32)
        return normalize_rows(desc)

    @property
    def channels(self) -> int:
        return self.feature_map.channels

    def __len__(self) -> int:
        return len(self.points)


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact (N_a, N_b) squared l2 distances, computed in bounded tiles.

    Each entry is sum_c (a_ic - b_jc)^2 with the same summation order as a
    naive per-pair computation, so results are bit-identical to it.
    """
    na, nb = a.shape[0], b.shape[0]
    out = np.empty((na, nb), dtype=np.float32)
    for i0 in range(0, na, _TILE):
        ai = a[i0:i0 + _TILE]
        for j0 in range(0, nb, _TILE):
            bj = b[j0:j0 + _TILE]
            diff = ai[:, None, :] - bj[None, :, :]
            out[i0:i0 + ai.shape[0], j0:j0 + bj.shape[0]] = (diff ** 2).sum(axis=2)
    return out


def _best_two(dists: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Indices and the two smallest values along an axis (ties to lowest index)."""
    idx = dists.argmin(axis=axis)
    d1 = dists.min(axis=axis)
    if dists.shape[axis] == 1:
        d2 = np.full_like(d1, np.inf)
    else:
        d2 = np.partition(dists, 1, axis=axis)
        d2 = d2[:, 1] if axis == 1 else d2[1, :]
    return idx, d1, d2


def _ratio_ok(d1_sq: np.ndarray, d2_sq: np.ndarray, r: float) -> np.ndarray:
    """Vectorized ratio test on squared distances (as true-l2 ratio <= r)."""
    ok = np.empty(d1_sq.shape, dtype=bool)
    inf2 = np.isinf(d2_sq)
    both_zero = (d1_sq == 0.0) & (d2_sq == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.sqrt(d1_sq) / np.sqrt(d2_sq)
    ok[:] = ratio <= r
    ok[inf2] = True          # d1/inf == 0
    ok[both_zero] = r >= 1.0  # fully ambiguous pair carries no information
    return ok


def nearest_two(query: np.ndarray, candidates: DescriptorView) -> tuple[int, float, float]:
    """Best and second-best l2 distances from one descriptor to a view.

    The query is l2-normalized before comparison.  Returns (best_index,
    best_dist, second_dist); second_dist is +inf for a singleton view.
    """
    if len(candidates) == 0:
        raise EmptyCandidates("no candidates to search")
    q = normalize_rows(np.asarray(query, dtype=np.float32)[None, :])
    if q.shape[1] != candidates.channels:
        raise ChannelMismatch(
            f"query has {q.shape[1]} channels, candidates {candidates.channels}"
        )
    d = _sq_dists(q, candidates.descriptors)[0]
    idx = int(d.argmin())
    d1 = float(np.sqrt(d[idx]))
    d2 = float(np.sqrt(np.partition(d, 1)[1])) if d.size > 1 else float("inf")
    return idx, d1, d2


def dnns(view_a: DescriptorView, view_b: DescriptorView,
         r: RatioThreshold) -> MatchSet:
    """Mutual nearest-neighbor matching with a bidirectional ratio test.

    Exact: equivalent to enumerating the full distance matrix.  Ties are
    broken toward the lowest candidate index on both sides.
    """
    if len(view_a) == 0 or len(view_b) == 0:
        raise EmptyCandidates("both views must be nonempty")
    if view_a.channels != view_b.channels:
        raise ChannelMismatch(
            f"channel counts differ: {view_a.channels} vs {view_b.channels}"
        )
    dists = _sq_dists(view_a.descriptors, view_b.descriptors)
    nn_a, d1_a, d2_a = _best_two(dists, axis=1)
    nn_b, d1_b, d2_b = _best_two(dists, axis=0)
    ok_a = _ratio_ok(d1_a, d2_a, r.value)
    ok_b = _ratio_ok(d1_b, d2_b, r.value)

    ia = np.arange(len(view_a))
    mutual = nn_b[nn_a] == ia
    keep = mutual & ok_a & ok_b[nn_a]
    pairs = [
        GridMatch(view_a.points[i], view_b.points[nn_a[i]])
        for i in np.nonzero(keep)[0]
    ]
    return MatchSet.build(view_a.feature_map.layer, pairs)
