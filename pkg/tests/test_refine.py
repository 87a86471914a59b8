import numpy as np
import pytest

from oracles import brute_force_hra_step

from deepmatch.core import FeatureMap, FeaturePyramid, GridMatch, GridPoint, MatchSet
from deepmatch.dnns import RatioThreshold
from deepmatch.errors import EmptyInitialSet, LayerMismatch, LayerUnderflow
from deepmatch.refine import (
    SCHEDULES,
    ThresholdSchedule,
    hra_step,
    receptive,
    refine_full,
)


def random_pyramid(seed: int, size: int = 64, channels: int = 6) -> FeaturePyramid:
    rng = np.random.default_rng(seed)
    layers = []
    for k in range(1, 6):
        dim = size // 2 ** (k - 1)
        layers.append(FeatureMap.from_array(
            k, rng.standard_normal((channels, dim, dim)).astype(np.float32)))
    terminal = FeatureMap.from_array(
        5, rng.standard_normal((channels, size // 16, size // 16)).astype(np.float32))
    return FeaturePyramid(layers=tuple(layers), terminal=terminal,
                          source_width=size, source_height=size)


def match_tuples(ms: MatchSet) -> set[tuple[int, int, int, int]]:
    return {(m.a.row, m.a.col, m.b.row, m.b.col) for m in ms.matches}


class TestSchedules:
    def test_named_schedules(self):
        assert SCHEDULES["r06"].values == (0.6, 0.6, 0.8, 0.9, 0.95)
        assert SCHEDULES["r09"].values == (0.9, 0.9, 0.9, 0.9, 0.95)

    def test_invalid_value(self):
        with pytest.raises(ValueError):
            ThresholdSchedule((0.6, 0.6, 0.8, 0.9, 1.2))


class TestReceptive:
    def test_layer5_example(self):
        window = receptive(GridPoint(3, 5, 5), rows=8, cols=12)
        assert {(p.row, p.col) for p in window} == {(6, 10), (6, 11), (7, 10), (7, 11)}
        assert all(p.layer == 4 for p in window)

    def test_layer2_origin(self):
        window = receptive(GridPoint(0, 0, 2), rows=4, cols=4)
        assert {(p.row, p.col) for p in window} == {(0, 0), (0, 1), (1, 0), (1, 1)}

    def test_full_window_at_last_cell(self):
        # exact doubling: the last parent cell still has a full 2x2 window
        window = receptive(GridPoint(3, 3, 3), rows=8, cols=8)
        assert len(window) == 4

    def test_layer1_underflow(self):
        with pytest.raises(LayerUnderflow):
            receptive(GridPoint(0, 0, 1), rows=4, cols=4)


class TestHraStep:
    def test_identity_windows(self):
        # same map on both sides; parent (1, 1) at layer 2
        rng = np.random.default_rng(0)
        fmap = FeatureMap.from_array(
            1, rng.standard_normal((4, 4, 4)).astype(np.float32))
        parents = MatchSet.build(2, [GridMatch(GridPoint(1, 1, 2), GridPoint(1, 1, 2))])
        out = hra_step(fmap, fmap, parents, RatioThreshold(0.9))
        assert match_tuples(out) == {(2, 2, 2, 2), (2, 3, 2, 3),
                                     (3, 2, 3, 2), (3, 3, 3, 3)}

    def test_degenerate_window(self):
        # all-equal descriptors inside window B: every ratio is 1 > 0.9
        rng = np.random.default_rng(1)
        fa = rng.standard_normal((3, 4, 4)).astype(np.float32)
        fb = rng.standard_normal((3, 4, 4)).astype(np.float32)
        fb[:, 0:2, 0:2] = fb[:, 0:1, 0:1]
        parents = MatchSet.build(2, [GridMatch(GridPoint(0, 0, 2), GridPoint(0, 0, 2))])
        out = hra_step(FeatureMap.from_array(1, fa), FeatureMap.from_array(1, fb),
                       parents, RatioThreshold(0.9))
        assert len(out) == 0

    def test_layer_mismatch(self):
        fmap = FeatureMap.from_array(1, np.zeros((2, 4, 4), dtype=np.float32))
        parents = MatchSet.build(3, [GridMatch(GridPoint(0, 0, 3), GridPoint(0, 0, 3))])
        with pytest.raises(LayerMismatch):
            hra_step(fmap, fmap, parents, RatioThreshold(0.9))

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_per_window_oracle(self, seed):
        rng = np.random.default_rng(seed)
        fa = rng.standard_normal((6, 8, 8)).astype(np.float32)
        fb = rng.standard_normal((6, 8, 8)).astype(np.float32)
        parent_coords = [
            (tuple(rng.integers(0, 4, 2)), tuple(rng.integers(0, 4, 2)))
            for _ in range(10)
        ]
        parents = MatchSet.build(3, [
            GridMatch(GridPoint(*a, 3), GridPoint(*b, 3)) for a, b in parent_coords
        ])
        out = hra_step(FeatureMap.from_array(2, fa), FeatureMap.from_array(2, fb),
                       parents, RatioThreshold(0.8))
        expected = brute_force_hra_step(fa, fb, [
            ((m.a.row, m.a.col), (m.b.row, m.b.col)) for m in parents.matches
        ], 0.8)
        assert match_tuples(out) == expected

    @pytest.mark.parametrize("seed", range(5))
    def test_child_locality(self, seed):
        rng = np.random.default_rng(50 + seed)
        fa = rng.standard_normal((4, 8, 8)).astype(np.float32)
        fb = rng.standard_normal((4, 8, 8)).astype(np.float32)
        parents = MatchSet.build(3, [
            GridMatch(GridPoint(*tuple(rng.integers(0, 4, 2)), 3),
                      GridPoint(*tuple(rng.integers(0, 4, 2)), 3))
            for _ in range(8)
        ])
        out = hra_step(FeatureMap.from_array(2, fa), FeatureMap.from_array(2, fb),
                       parents, RatioThreshold(0.9))
        parent_set = {((m.a.row, m.a.col), (m.b.row, m.b.col))
                      for m in parents.matches}
        for m in out.matches:
            assert any(
                m.a.row // 2 == pa[0] and m.a.col // 2 == pa[1]
                and m.b.row // 2 == pb[0] and m.b.col // 2 == pb[1]
                for pa, pb in parent_set
            )

    def test_cardinality_bounds(self):
        rng = np.random.default_rng(77)
        fa = rng.standard_normal((4, 8, 8)).astype(np.float32)
        fb = rng.standard_normal((4, 8, 8)).astype(np.float32)
        parents = MatchSet.build(3, [
            GridMatch(GridPoint(r, c, 3), GridPoint(r, c, 3))
            for r in range(4) for c in range(4)
        ])
        out = hra_step(FeatureMap.from_array(2, fa), FeatureMap.from_array(2, fb),
                       parents, RatioThreshold(1.0))
        assert len(out) <= 4 * len(parents)
        assert len(out) <= 64


class TestRefineFull:
    def test_empty_initial(self):
        pyr = random_pyramid(0)
        with pytest.raises(EmptyInitialSet):
            refine_full(pyr, pyr, MatchSet(layer=5, matches=()), SCHEDULES["r09"])

    def test_self_match_diagonal_at_layer1(self):
        pyr = random_pyramid(3)
        dim5 = pyr.layer_map(5).rows
        initial = MatchSet.build(5, [
            GridMatch(GridPoint(r, c, 5), GridPoint(r, c, 5))
            for r in range(dim5) for c in range(dim5)
        ])
        out = refine_full(pyr, pyr, initial, SCHEDULES["r09"])
        assert len(out) > 0
        for m in out.matches:
            assert m.a == m.b

    @pytest.mark.parametrize("seed", range(3))
    def test_equals_step_composition(self, seed):
        pyr_a = random_pyramid(seed)
        pyr_b = random_pyramid(seed + 100)
        initial = MatchSet.build(5, [
            GridMatch(GridPoint(r, c, 5), GridPoint(r, c, 5))
            for r in range(4) for c in range(4)
        ])
        schedule = SCHEDULES["r09"]
        out = refine_full(pyr_a, pyr_b, initial, schedule)
        step = initial
        for n in range(5, 1, -1):
            step = hra_step(pyr_a.layer_map(n - 1), pyr_b.layer_map(n - 1),
                            step, schedule.by_layer(n - 1))
        assert out.matches == step.matches
