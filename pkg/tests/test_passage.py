import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lppsim.errors import BoxError, DimensionMismatch, LimitExceeded, Unreachable
from lppsim.lattice import GraphKind, LatticePoint, embed_point, level_set
from lppsim.passage import (
    TransportedField,
    WeightField,
    brute_force_oracle,
    embedding_comparison,
    geodesic,
    ground_state,
    last_passage_time,
    passage_grid,
    path_weight,
    shift_difference,
    shift_grids,
)
from lppsim.randomness import DistributionSpec, SeedContext

O, S = GraphKind.ORDERED, GraphKind.SPACETIME
G = DistributionSpec.gaussian()
LAWS = [G, DistributionSpec.uniform(), DistributionSpec.gamma(2.0),
        DistributionSpec.geometric(0.5), DistributionSpec.bernoulli(0.5)]


def fld(spec=G, sample=0, seed=3, overrides=None):
    return WeightField(spec, SeedContext(seed, 0, sample), overrides)


class Shifted:
    """A field plus a constant."""

    def __init__(self, base, c):
        self.base, self.c = base, c

    def box(self, lo, hi):
        return self.base.box(lo, hi) + self.c

    def at(self, pts):
        return self.base.at(pts) + self.c


def hand_field():
    return fld(DistributionSpec.pointmass(0.0),
               overrides={(1, 0): 5.0, (0, 1): 1.0, (1, 1): 2.0})


class TestPassageTime:
    def test_pointmass(self):
        f = fld(DistributionSpec.pointmass(1.0))
        assert last_passage_time(f, (0, 0), (2, 1)) == 3.0

    def test_hand_fixture(self):
        assert last_passage_time(hand_field(), (0, 0), (1, 1)) == 7.0

    def test_start_excluded(self):
        f = fld(overrides={(0, 0): 1e6})
        assert last_passage_time(f, (0, 0), (0, 0)) == 0.0
        assert last_passage_time(f, (0, 0), (1, 0)) == f.weight((1, 0))

    def test_924_paths(self):
        f = fld()
        from lppsim.lattice import path_count
        assert path_count((0, 0), (6, 6)) == 924
        assert last_passage_time(f, (0, 0), (6, 6)) == pytest.approx(
            brute_force_oracle(f, (0, 0), (6, 6)), abs=1e-12)

    @pytest.mark.parametrize("spec", LAWS, ids=str)
    @pytest.mark.parametrize("d", [2, 3])
    def test_oracle_random_targets(self, spec, d):
        rng = np.random.default_rng(d)
        for i in range(15):
            y = tuple(int(c) for c in rng.multinomial(int(rng.integers(1, 9)), [1 / d] * d))
            f = fld(spec, i)
            t = last_passage_time(f, (0,) * d, y)
            assert abs(t - brute_force_oracle(f, (0,) * d, y)) <= 1e-12 * sum(y)

    @pytest.mark.parametrize("d", [2, 3])
    def test_oracle_spacetime(self, d):
        for i, y in enumerate([(1, 3), (0, 4), (-2, 6)] if d == 2 else [(1, 0, 3), (0, -1, 5)]):
            f = fld(sample=i)
            t = last_passage_time(f, (0,) * d, y, S)
            assert t == pytest.approx(brute_force_oracle(f, (0,) * d, y, S), abs=1e-12)

    def test_single_path_axis(self):
        f = fld()
        axis = [(0, k) for k in range(1, 6)]
        assert brute_force_oracle(f, (0, 0), (0, 5)) == pytest.approx(f.at(axis).sum())
        assert last_passage_time(f, (0, 0), (0, 5)) == pytest.approx(f.at(axis).sum())

    def test_oracle_pointmass(self):
        f = fld(DistributionSpec.pointmass(2.5))
        assert brute_force_oracle(f, (1, 1, 0), (3, 2, 2)) == 2.5 * 5

    def test_errors(self):
        f = fld()
        with pytest.raises(Unreachable):
            last_passage_time(f, (0, 0), (-1, 2))
        with pytest.raises(Unreachable):
            last_passage_time(f, (0, 0), (1, 2), S)
        with pytest.raises(DimensionMismatch):
            last_passage_time(f, (0, 0), (1, 1, 1))
        with pytest.raises(LimitExceeded):
            brute_force_oracle(f, (0, 0), (10, 10), limit=1000)

    def test_bounded_field(self):
        f = WeightField(G, SeedContext(1), bounds=((0, 0), (3, 3)))
        assert np.isfinite(last_passage_time(f, (0, 0), (3, 3)))
        with pytest.raises(BoxError):
            last_passage_time(f, (0, 0), (4, 3))


class TestGrid:
    def test_out_neighbour(self):
        f = fld()
        g = passage_grid(f, (0, 0, 0), (2, 2, 2))
        for j in range(3):
            e = tuple(int(k == j) for k in range(3))
            assert g.value(e) == f.weight(e)

    def test_consistency_with_single_queries(self):
        f = fld(DistributionSpec.gamma(2.0))
        g = passage_grid(f, (1, 2), (5, 6))
        for y in itertools.product(range(1, 6), range(2, 7)):
            assert g.value(y) == pytest.approx(last_passage_time(f, (1, 2), y), abs=1e-12)

    def test_spacetime_consistency(self):
        f = fld()
        g = passage_grid(f, (0, 0), 6, S)
        for x in range(-6, 7):
            y = (x, 6)
            if (6 - abs(x)) % 2 == 0:
                assert g.value(y) == pytest.approx(last_passage_time(f, (0, 0), y, S))
            else:
                with pytest.raises(Unreachable):
                    g.value(y)

    @given(st.integers(0, 10 ** 6), st.lists(st.integers(0, 4), min_size=2, max_size=3), st.data())
    def test_superadditivity(self, sample, v, data):
        w = data.draw(st.lists(st.integers(0, 4), min_size=len(v), max_size=len(v)))
        f = fld(sample=sample)
        o = (0,) * len(v)
        vw = tuple(a + b for a, b in zip(v, w))
        assert last_passage_time(f, o, vw) >= (last_passage_time(f, o, v)
                                              + last_passage_time(f, v, vw) - 1e-12)

    def test_level_values_and_csv(self):
        g = passage_grid(fld(), (0, 0), (2, 2))
        pts, vals = g.level_values(2)
        assert sorted(map(tuple, pts.tolist())) == [(0, 2), (1, 1), (2, 0)]
        rows = g.to_csv().strip().splitlines()
        assert rows[0] == "x1,x2,T,back" and len(rows) == 10

    def test_box_errors(self):
        g = passage_grid(fld(), (0, 0), (2, 2))
        with pytest.raises(BoxError):
            g.value((3, 0))
        with pytest.raises(Unreachable):
            passage_grid(fld(), (0, 0), (-1, 2))


class TestGeodesic:
    def test_hand_fixture(self):
        geo = geodesic(hand_field(), (0, 0), (1, 1))
        assert [tuple(v) for v in geo.vertices()] == [(1, 0), (1, 1)]
        assert geo.value == 7.0

    def test_pointmass_staircase(self):
        geo = geodesic(fld(DistributionSpec.pointmass(1.0)), (0, 0), (2, 2))
        # backtracking from (2,2) takes e1 first, so the forward path ends with the e1 steps
        assert geo.path.steps == (1, 1, 0, 0)
        assert geo.value == 4.0

    @given(st.integers(0, 10 ** 6), st.sampled_from(LAWS),
           st.lists(st.integers(0, 5), min_size=1, max_size=3))
    def test_value_and_length(self, sample, spec, y):
        f = fld(spec, sample)
        o = (0,) * len(y)
        geo = geodesic(f, o, tuple(y))
        assert len(geo.vertices()) == sum(y)
        assert geo.value == pytest.approx(last_passage_time(f, o, tuple(y)), abs=1e-12)
        assert geo.value == pytest.approx(path_weight(f, geo.path), abs=1e-12)

    def test_spacetime_length(self):
        geo = geodesic(fld(), (0, 0, 0), (1, -1, 6), S)
        assert len(geo.vertices()) == 6 and tuple(geo.path.end) == (1, -1, 6)

    @given(st.integers(0, 10 ** 6), st.floats(-3, 3),
           st.lists(st.integers(0, 5), min_size=2, max_size=3))
    def test_constant_shift(self, sample, c, y):
        f = fld(sample=sample)
        o = (0,) * len(y)
        g0 = passage_grid(f, o, tuple(y))
        g1 = passage_grid(Shifted(f, c), o, tuple(y))
        assert g1.value(y) == pytest.approx(g0.value(y) + c * sum(y), abs=1e-9)
        assert g1.path_to(y).steps == g0.path_to(y).steps

    @given(st.integers(0, 10 ** 6), st.lists(st.integers(0, 4), min_size=2, max_size=3),
           st.data(), st.floats(0, 5))
    def test_monotone_in_weights(self, sample, y, data, bump):
        v = tuple(data.draw(st.integers(0, c)) for c in y)
        f = fld(sample=sample)
        up = f.with_overrides({v: f.weight(v) + bump})
        o = (0,) * len(y)
        assert last_passage_time(up, o, tuple(y)) >= last_passage_time(f, o, tuple(y))

    def test_csv(self):
        f = fld()
        text = geodesic(f, (0, 0), (2, 1)).to_csv(f)
        lines = text.strip().splitlines()
        assert lines[0] == "step,x1,x2,direction,weight" and len(lines) == 4


class TestGroundState:
    @pytest.mark.parametrize("d", [2, 3])
    def test_pointmass(self, d):
        val, arg = ground_state(fld(DistributionSpec.pointmass(1.0)), 5, O, d=d)
        assert val == 5.0 and arg == (5,) + (0,) * (d - 1)

    def test_dominates_level(self):
        f = fld()
        val, arg = ground_state(f, 6, O, d=2)
        vals = [last_passage_time(f, (0, 0), x) for x in level_set(6, O, 2)]
        assert val == max(vals)
        assert last_passage_time(f, (0, 0), arg) == val

    @pytest.mark.parametrize("N", [1, 4, 9])
    def test_transport_2d(self, N):
        for i in range(5):
            f = fld(sample=i)
            val, arg = ground_state(f, N, O, d=2)
            tval, targ = ground_state(TransportedField(f), N, S, d=2)
            assert tval == val
            assert val == last_passage_time(f, (0, 0), arg)

    def test_requires_start_or_d(self):
        with pytest.raises(ValueError):
            ground_state(fld(), 3)


class TestShift:
    def test_pointmass(self):
        assert shift_difference(fld(DistributionSpec.pointmass(1.0)), (4, 4)) == 1.0

    def test_grids_match_scalar(self):
        f = fld()
        sg = shift_grids(f, (5, 5))
        assert sg.h((5, 5)) == pytest.approx(shift_difference(f, (5, 5)))
        assert sg.h_array()[5, 5] == pytest.approx(sg.h((5, 5)))

    @given(st.integers(0, 10 ** 6))
    def test_monotone_along_geodesic(self, sample):
        f = fld(sample=sample)
        x = (6, 6)
        sg = shift_grids(f, x)
        h = sg.h_array()
        path = sg.from_minus.path_to(x)
        for v in path.vertices():
            if all(c >= 0 for c in v):
                assert h[x] <= h[tuple(v)] + 1e-9 * (1 + abs(h[tuple(v)]))

    @given(st.integers(0, 10 ** 6), st.lists(st.integers(0, 3), min_size=2, max_size=2))
    def test_against_oracle(self, sample, x):
        f = fld(sample=sample)
        m = (-1, 0)
        ref = brute_force_oracle(f, m, tuple(x)) - brute_force_oracle(f, (0, 0), tuple(x))
        assert shift_difference(f, tuple(x)) == pytest.approx(ref, abs=1e-12)

    def test_negative_target(self):
        with pytest.raises(Unreachable):
            shift_difference(fld(), (-1, 2))


class TestEmbedding:
    @pytest.mark.parametrize("a", [(3, 4), (0, 6), (2, 2, 3), (4, 0, 1), (1, 1, 1, 2)])
    def test_exact_and_dominated(self, a):
        for i in range(4):
            cmp = embedding_comparison(fld(sample=i), a)
            assert cmp.exact and cmp.dominated

    def test_transport_places_weights(self):
        f = fld()
        tf = TransportedField(f)
        for v in [(0, 0), (1, 2), (3, 1)]:
            assert tf.weight(embed_point(v)) == f.weight(v)
        # (0, 1) has odd parity in 2d and is not an image point
        assert np.isfinite(tf.weight((0, 1)))
