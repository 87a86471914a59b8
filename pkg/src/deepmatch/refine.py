"""Hierarchical refinement: re-match inside receptive windows, layer by layer.

A match at layer n seeds a restricted mutual nearest-neighbor search at layer
n-1: each endpoint expands to its 2x2 receptive window (indices doubled plus
the one-cell right/bottom neighborhood) and matching runs between the two
windows only.  Iterating from layer 5 down to layer 1 turns coarse semantic
matches into well-localized ones without ever paying for a full-grid search
at fine resolutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FeatureMap, FeaturePyramid, GridMatch, GridPoint, MatchSet
from .dnns import DescriptorView, RatioThreshold, dnns, normalize_rows
from .errors import EmptyInitialSet, LayerMismatch, LayerUnderflow

_CHUNK = 4096  # parent pairs processed per vectorized batch


@dataclass(frozen=True)
class ThresholdSchedule:
    """Per-layer ratio thresholds, index 0 = layer 1 (shallowest).

    The entry for layer k gates the matching step that produces layer-k
    matches; entry 5 gates the initial full-grid search.
    """

    values: tuple[float, float, float, float, float]

    def __post_init__(self):
        for v in self.values:
            if not 0.0 < v <= 1.0:
                raise ValueError(f"threshold {v} outside (0, 1]")

    def by_layer(self, layer: int) -> RatioThreshold:
        return RatioThreshold(self.values[layer - 1])

    @classmethod
    def r06(cls) -> "ThresholdSchedule":
        return cls((0.6, 0.6, 0.8, 0.9, 0.95))

    @classmethod
    def r09(cls) -> "ThresholdSchedule":
        return cls((0.9, 0.9, 0.9, 0.9, 0.95))


SCHEDULES = {"r06": ThresholdSchedule.r06(), "r09": ThresholdSchedule.r09()}


def receptive(p: GridPoint, rows: int, cols: int) -> tuple[GridPoint, ...]:
    """Receptive window of a layer-n cell on the layer n-1 grid.

    rows/cols are the bounds of the layer n-1 grid; with dims padded to a
    multiple of 16 the grid doubles exactly, so clipping never fires for
    in-bounds parents, but it is applied anyway.
    """
    if p.layer <= 1:
        raise LayerUnderflow("layer-1 points have no finer receptive window")
    child_layer = p.layer - 1
    window = tuple(
        GridPoint(r, c, child_layer)
        for r in (2 * p.row, 2 * p.row + 1)
        for c in (2 * p.col, 2 * p.col + 1)
        if r < rows and c < cols
    )
    return window


def _hra_step_windows(fa: FeatureMap, fb: FeatureMap, matches: MatchSet,
                      r: RatioThreshold) -> MatchSet:
    """Reference path: one dnns call per parent window pair."""
    pairs: list[GridMatch] = []
    for m in matches.matches:
        wa = receptive(m.a, fa.rows, fa.cols)
        wb = receptive(m.b, fb.rows, fb.cols)
        child = dnns(DescriptorView(fa, wa), DescriptorView(fb, wb), r)
        pairs.extend(child.matches)
    return MatchSet.build(fa.layer, pairs)


def _window_descriptors(fmap: FeatureMap, rows: np.ndarray,
                        cols: np.ndarray) -> np.ndarray:
    """Gather (P, 4, C) normalized descriptors for 2x2 windows at 2*(rows, cols)."""
    dy = np.array([0, 0, 1, 1])
    dx = np.array([0, 1, 0, 1])
    rr = 2 * rows[:, None] + dy[None, :]
    cc = 2 * cols[:, None] + dx[None, :]
    desc = fmap.data[:, rr, cc].transpose(1, 2, 0).astype(np.float32)
    p, k, c = desc.shape
    return normalize_rows(desc.reshape(p * k, c)).reshape(p, k, c)


def hra_step(fa_prev: FeatureMap, fb_prev: FeatureMap, matches: MatchSet,
             r: RatioThreshold) -> MatchSet:
    """One refinement step: layer-n matches to layer n-1 matches.

    Window-restricted mutual NN with the ratio test evaluated inside each
    window pair only; children from different parents are merged with set
    semantics and sorted by (rowA, colA, rowB, colB).
    """
    n = matches.layer
    if n < 2:
        raise LayerUnderflow("cannot refine below layer 1")
    if fa_prev.layer != n - 1 or fb_prev.layer != n - 1:
        raise LayerMismatch(
            f"feature maps at layers {fa_prev.layer}/{fb_prev.layer}, "
            f"expected {n - 1}"
        )
    if len(matches) == 0:
        return MatchSet(layer=n - 1, matches=())

    rows_a = np.array([m.a.row for m in matches.matches], dtype=np.intp)
    cols_a = np.array([m.a.col for m in matches.matches], dtype=np.intp)
    rows_b = np.array([m.b.row for m in matches.matches], dtype=np.intp)
    cols_b = np.array([m.b.col for m in matches.matches], dtype=np.intp)

    # Fast path requires full 2x2 windows; exact doubling guarantees it.
    if (2 * rows_a.max() + 1 >= fa_prev.rows or 2 * cols_a.max() + 1 >= fa_prev.cols
            or 2 * rows_b.max() + 1 >= fb_prev.rows
            or 2 * cols_b.max() + 1 >= fb_prev.cols):
        return _hra_step_windows(fa_prev, fb_prev, matches, r)

    dy = np.array([0, 0, 1, 1])
    dx = np.array([0, 1, 0, 1])
    out_a: list[np.ndarray] = []
    out_b: list[np.ndarray] = []
    for start in range(0, len(matches), _CHUNK):
        sl = slice(start, start + _CHUNK)
        da = _window_descriptors(fa_prev, rows_a[sl], cols_a[sl])
        db = _window_descriptors(fb_prev, rows_b[sl], cols_b[sl])
        dists = ((da[:, :, None, :] - db[:, None, :, :]) ** 2).sum(axis=3)

        nn_a = dists.argmin(axis=2)
        d1_a = dists.min(axis=2)
        d2_a = np.partition(dists, 1, axis=2)[:, :, 1]
        nn_b = dists.argmin(axis=1)
        d1_b = dists.min(axis=1)
        d2_b = np.partition(dists, 1, axis=1)[:, 1, :]

        def ratio_ok(d1, d2):
            # same arithmetic as dnns._ratio_ok to stay bit-compatible
            both_zero = (d1 == 0.0) & (d2 == 0.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                ok = np.sqrt(d1) / np.sqrt(d2) <= r.value
            ok |= np.isinf(d2)
            ok[both_zero] = r.value >= 1.0
            return ok

        p = np.arange(dists.shape[0])[:, None]
        i = np.arange(4)[None, :]
        mutual = nn_b[p, nn_a] == i
        keep = mutual & ratio_ok(d1_a, d2_a) & ratio_ok(d1_b, d2_b)[p, nn_a]

        pi, ii = np.nonzero(keep)
        ji = nn_a[pi, ii]
        pi_abs = pi + start
        out_a.append(np.stack([2 * rows_a[pi_abs] + dy[ii],
                               2 * cols_a[pi_abs] + dx[ii]], axis=1))
        out_b.append(np.stack([2 * rows_b[pi_abs] + dy[ji],
                               2 * cols_b[pi_abs] + dx[ji]], axis=1))

    if not out_a:
        return MatchSet(layer=n - 1, matches=())
    coords = np.concatenate(
        [np.concatenate(out_a, axis=0), np.concatenate(out_b, axis=0)], axis=1
    )
    coords = np.unique(coords, axis=0)  # dedup + lexsort (rowA, colA, rowB, colB)
    child_layer = n - 1
    pairs = tuple(
        GridMatch(GridPoint(int(ra), int(ca), child_layer),
                  GridPoint(int(rb), int(cb), child_layer))
        for ra, ca, rb, cb in coords
    )
    return MatchSet(layer=child_layer, matches=pairs)


def refine_full(pyr_a: FeaturePyramid, pyr_b: FeaturePyramid,
                initial: MatchSet, schedule: ThresholdSchedule) -> MatchSet:
    """Refine layer-5 matches down to layer 1.

    Steps n = 5..2 use the schedule thresholds for layers 4..1; the layer-5
    entry is assumed to have gated the search that produced ``initial``.
    """
    if len(initial) == 0:
        raise EmptyInitialSet("refinement needs at least one coarse match")
    if initial.layer != 5:
        raise LayerMismatch(f"initial matches at layer {initial.layer}, expected 5")
    matches = initial
    for n in range(5, 1, -1):
        matches = hra_step(
            pyr_a.layer_map(n - 1),
            pyr_b.layer_map(n - 1),
            matches,
            schedule.by_layer(n - 1),
        )
    return matches
