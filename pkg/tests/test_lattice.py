import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lppsim.errors import DimensionMismatch, LimitExceeded, Unreachable
from lppsim.lattice import (
    GraphKind,
    HyperplaneL,
    LatticePoint,
    PathSpec,
    cone_contains,
    embed_path,
    embed_point,
    embed_points,
    enumerate_paths,
    leq,
    level_set,
    path_count,
    reachable,
    reflect_point,
    reflect_points,
    step_sequences,
    steps,
)

O, S = GraphKind.ORDERED, GraphKind.SPACETIME


def _orbit_count(d):
    # distinct orderings of a multiset of step labels
    return len(set(itertools.permutations(sum(([i] * k for i, k in enumerate(d)), []))))


class TestLatticePoint:
    def test_norm_and_arithmetic(self):
        x = LatticePoint((2, -1, 3))
        assert x.dim == 3 and x.norm1 == 6
        assert x + LatticePoint((1, 1, 1)) == (3, 0, 4)
        assert x - x == (0, 0, 0)
        assert x.scale(2) == (4, -2, 6)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            LatticePoint((1, 2)) + LatticePoint((1, 2, 3))
        with pytest.raises(DimensionMismatch):
            leq((0, 0), (1, 1, 1))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            LatticePoint(())


class TestOrder:
    def test_examples(self):
        assert leq((0, 0), (1, 1))
        assert not leq((1, 0), (0, 1))
        assert leq((3, 4), (3, 4))

    @given(st.lists(st.integers(-5, 5), min_size=1, max_size=4), st.data())
    def test_leq_is_reachability(self, x, data):
        y = data.draw(st.lists(st.integers(-5, 5), min_size=len(x), max_size=len(x)))
        assert leq(x, y) == reachable(x, y, O) == (path_count(x, y) > 0)


class TestPathCount:
    def test_examples(self):
        assert path_count((0, 0), (1, 1)) == 2
        assert path_count((0, 0), (0, 5)) == 1
        assert path_count((0, 0, 0), (2, 1, 1)) == _orbit_count((2, 1, 1)) == 12

    def test_unreachable_is_zero(self):
        assert path_count((1, 0), (0, 1)) == 0
        assert path_count((0, 0), (1, 0), S) == 0

    def test_overflow(self):
        with pytest.raises(OverflowError):
            path_count((0, 0), (200, 200))

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=4))
    def test_multinomial_matches_enumeration(self, d):
        assert path_count((0,) * len(d), tuple(d)) == _orbit_count(d)

    @given(st.integers(0, 6), st.integers(-6, 6))
    def test_spacetime_count_matches_enumeration(self, n, x):
        brute = sum(1 for mv in itertools.product((1, -1), repeat=n) if sum(mv) == x)
        assert path_count((0, 0), (x, n), S) == brute


class TestEnumeration:
    def test_two_paths_to_diagonal(self):
        paths = enumerate_paths((0, 0), (1, 1), 10)
        firsts = sorted(tuple(next(p.vertices())) for p in paths)
        assert firsts == [(0, 1), (1, 0)]

    def test_single_path(self):
        assert len(enumerate_paths((0, 0), (0, 3), 10)) == 1

    def test_limit_refusal(self):
        with pytest.raises(LimitExceeded):
            enumerate_paths((0, 0), (5, 5), 10)
        assert step_sequences((0, 0), (5, 5), 252).shape == (252, 10)

    def test_unreachable(self):
        with pytest.raises(Unreachable):
            enumerate_paths((1, 1), (0, 2), 10)

    @given(st.lists(st.integers(0, 3), min_size=2, max_size=3))
    def test_paths_have_full_length_and_end(self, d):
        x = (0,) * len(d)
        paths = enumerate_paths(x, tuple(d), 10_000)
        assert len(paths) == path_count(x, tuple(d))
        for p in paths:
            assert len(p) == sum(d) == len(list(p.vertices()))
            assert p.end == tuple(d)
        assert len({p.steps for p in paths}) == len(paths)

    def test_spacetime_paths(self):
        paths = enumerate_paths((0, 0), (0, 4), 100, S)
        assert len(paths) == math.comb(4, 2)
        assert all(p.end == (0, 4) for p in paths)

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            PathSpec((0, 0), (0, 2))


class TestLevelSet:
    def test_examples(self):
        assert sorted(level_set(2, O, 2)) == [(0, 2), (1, 1), (2, 0)]
        assert sorted(level_set(2, S, 2)) == [(-2, 2), (0, 2), (2, 2)]
        assert level_set(0, O, 3) == [(0, 0, 0)]

    @pytest.mark.parametrize("d", [1, 2, 3, 4])
    @pytest.mark.parametrize("N", range(9))
    def test_ordered_size(self, N, d):
        pts = level_set(N, O, d)
        assert len(pts) == math.comb(N + d - 1, d - 1)
        brute = [p for p in itertools.product(range(N + 1), repeat=d) if sum(p) == N]
        assert sorted(pts) == sorted(brute)

    @pytest.mark.parametrize("d", [2, 3])
    @pytest.mark.parametrize("N", range(6))
    def test_spacetime_matches_walks(self, N, d):
        st_ = steps(S, d)
        ends = {tuple(np.sum([st_[j] for j in seq], axis=0)) if N else (0,) * d
                for seq in itertools.product(range(len(st_)), repeat=N)}
        assert sorted(level_set(N, S, d)) == sorted(ends)


class TestEmbedding:
    def test_examples(self):
        assert embed_point((2, 1)) == (1, 3)
        assert embed_point((0, 1)) == (-1, 1)
        assert embed_point((0, 0, 1)) == (-1, 0, 1)

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_injective_on_box(self, d):
        pts = np.array(list(itertools.product(range(-3, 4), repeat=d)))
        img = embed_points(pts)
        assert len({tuple(r) for r in img}) == len(pts)

    @given(st.lists(st.integers(0, 3), min_size=2, max_size=3))
    def test_paths_embed_injectively(self, d):
        x = (0,) * len(d)
        paths = enumerate_paths(x, tuple(d), 10_000)
        images = [embed_path(p) for p in paths]
        assert len({p.steps for p in images}) == len(paths)
        for p, q in zip(paths, images):
            assert len(q) == len(p) and q.kind is S
            assert q.end == embed_point(p.end)

    @pytest.mark.parametrize("N", range(8))
    def test_level_sets_biject_in_2d(self, N):
        img = sorted(embed_point(p) for p in level_set(N, O, 2))
        assert img == sorted(level_set(N, S, 2))

    def test_cone(self):
        assert cone_contains((0, 1))
        assert not cone_contains((1, 0))
        assert cone_contains((1, 1))

    @given(st.lists(st.integers(0, 20), min_size=2, max_size=4))
    def test_image_of_orthant_in_cone(self, x):
        assert cone_contains(embed_point(x))


class TestReflection:
    def test_example(self):
        assert reflect_point((0, 4), HyperplaneL(2)) == (2, 2)

    @given(st.lists(st.integers(-20, 20), min_size=2, max_size=4), st.integers(-5, 5),
           st.integers(-20, 20))
    def test_involution_fixed_points_distances(self, x, k, p1):
        L = HyperplaneL(k)
        r = reflect_point(x, L)
        assert reflect_point(r, L) == tuple(x)
        on = (p1, p1 + k) + tuple(x[2:])
        assert reflect_point(on, L) == on
        dist = sum(abs(a - b) for a, b in zip(x, on))
        assert sum(abs(a - b) for a, b in zip(r, on)) == dist
        assert L.side(r) == -L.side(x)

    @given(st.integers(0, 30), st.integers(1, 15))
    def test_antidiagonal_level_preserved(self, a1, a2):
        # reflection maps (0, a2) onto the antidiagonal point b with |b| = |a|
        k = (a2 + 1) // 2
        a = (0, a2)
        b = reflect_point(a, HyperplaneL(k))
        if a2 % 2 == 0:
            assert sum(b) == sum(a) and b == (a2 // 2, a2 // 2)
        assert sum(reflect_point((a1, a1 + k), HyperplaneL(k))) == 2 * a1 + k

    def test_vectorized_matches_scalar(self):
        pts = np.array(list(itertools.product(range(-2, 3), repeat=3)))
        L = HyperplaneL(1)
        out = reflect_points(pts, L)
        assert [tuple(r) for r in out] == [reflect_point(p, L) for p in pts]
