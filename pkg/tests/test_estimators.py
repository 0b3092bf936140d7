import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from lppsim import estimators as est
from lppsim.errors import ConfigError, DegenerateWindow
from lppsim.lattice import GraphKind
from lppsim.passage import TransportedField, WeightField, geodesic, ground_state, last_passage_time
from lppsim.randomness import DistributionSpec, SeedContext

G = DistributionSpec.gaussian()
ONE = DistributionSpec.pointmass(1.0)
GAMMA = DistributionSpec.gamma(2.0)

# E max(X, Y) for independent standard normals, frozen from the quadrature below
MAX_TWO_NORMALS = 0.5641895835477563


def test_max_two_normals_oracle():
    val, _ = integrate.quad(lambda t: 2 * t * stats.norm.pdf(t) * stats.norm.cdf(t), -np.inf, np.inf)
    assert val == pytest.approx(MAX_TWO_NORMALS, abs=1e-12)
    assert val == pytest.approx(1 / math.sqrt(math.pi), abs=1e-12)


class TestSampleStats:
    def test_constant(self):
        s = est.SampleStats.from_samples(np.full(50, 3.0), 1)
        assert s.variance == 0.0 and s.mean_ci == (3.0, 3.0) and s.var_ci == (0.0, 0.0)

    def test_deterministic(self):
        x = np.random.default_rng(0).normal(size=300)
        a = est.SampleStats.from_samples(x, 7)
        b = est.SampleStats.from_samples(x, 7)
        assert a == b

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=60), st.integers(0, 1000))
    def test_invariants(self, xs, seed):
        s = est.SampleStats.from_samples(np.array(xs), seed, resamples=200)
        assert s.variance >= 0
        assert s.mean_ci[0] <= s.mean <= s.mean_ci[1]
        assert s.var_ci[0] <= s.variance <= s.var_ci[1]

    def test_normal_theory_switch(self):
        x = np.random.default_rng(1).normal(size=1000)
        s = est.SampleStats.from_samples(x, 0, bootstrap_ci=False)
        b = est.SampleStats.from_samples(x, 0)
        assert s.mean_ci == pytest.approx(b.mean_ci, abs=0.02)
        assert s.var_ci == pytest.approx(b.var_ci, abs=0.05)

    def test_too_few(self):
        with pytest.raises(ValueError):
            est.SampleStats.from_samples([1.0], 0)


def test_wilson():
    lo, hi = est.wilson_interval(0, 100)
    assert lo == 0.0 and 0 < hi < 0.07
    lo, hi = est.wilson_interval(50, 100, 0.95)
    assert lo < 0.5 < hi and hi - lo == pytest.approx(2 * 1.96 * 0.05, rel=0.05)


def test_fit_loglog_exact():
    Ns = [8, 16, 32, 64]
    fit = est.fit_loglog(Ns, [3 * N ** 0.7 for N in Ns])
    assert fit.slope == pytest.approx(0.7) and fit.se == pytest.approx(0.0, abs=1e-12)
    assert est.fit_loglog([2, 4], [1, 2]).upper() == math.inf


class TestPassageStats:
    def test_pointmass(self):
        s = est.mc_passage_stats(ONE, (3, 4), 50, 1)
        assert s.mean == 7.0 and s.variance == 0.0 and s.mean_ci == (7.0, 7.0)

    def test_one_dimensional_variance(self):
        N, n = 16, 4000
        s = est.mc_passage_stats(G, (N,), n, 2)
        assert abs(s.variance - N) <= 5 * math.sqrt(2) * N / math.sqrt(n)

    def test_unit_square_mean(self):
        n = 50_000
        s = est.mc_passage_stats(G, (1, 1), n, 3)
        assert abs(s.mean - MAX_TWO_NORMALS) <= 3 * math.sqrt(s.variance / n)

    def test_samples_match_scalar_path(self):
        vals = est.passage_samples(GAMMA, (3, 2, 2), 4, 1, 5, 9)
        for r, i in enumerate(range(5, 9)):
            f = WeightField(GAMMA, SeedContext(4, 1, i))
            assert vals[r] == pytest.approx(last_passage_time(f, (0, 0, 0), (3, 2, 2)), abs=1e-12)

    def test_shard_independent(self):
        a = est.passage_samples(G, (5, 5), 1, 0, 0, 100)
        b = np.concatenate([est.passage_samples(G, (5, 5), 1, 0, 0, 37),
                            est.passage_samples(G, (5, 5), 1, 0, 37, 100)])
        assert np.array_equal(a, b)


class TestScaling:
    def test_one_dimensional(self):
        rep = est.variance_scaling(G, (1,), [8, 16, 32, 64, 128], 2000, 5)
        assert abs(rep.chi - 1.0) <= 0.05

    def test_pointmass_refused(self):
        rep = est.variance_scaling(ONE, (1, 1), [8, 16], 20, 5)
        assert rep.refused and rep.chi is None
        assert all(s.variance == 0 for s in rep.stats)

    def test_polymer_pointmass(self):
        rep = est.polymer_variance(ONE, [8, 16], 10, GraphKind.SPACETIME, 2, 1)
        assert rep.refused
        assert [s.mean for s in rep.stats] == [8.0, 16.0]

    def test_polymer_transport_agreement(self):
        # ordered ground states equal the transported space-time ones sample by sample
        N, n = 6, 40
        ordered = est.ground_samples(G, N, 2, GraphKind.ORDERED, 9, 0, 0, n)
        transported = np.array([
            ground_state(TransportedField(WeightField(G, SeedContext(9, 0, i))), N,
                         GraphKind.SPACETIME, d=2)[0] for i in range(n)])
        np.testing.assert_allclose(ordered, transported, atol=1e-12)
        a = est.SampleStats.from_samples(ordered, 9)
        b = est.SampleStats.from_samples(transported, 9)
        assert a.variance == pytest.approx(b.variance, rel=1e-12)

    def test_spacetime_ground_matches_dp(self):
        vals = est.ground_samples(G, 5, 3, GraphKind.SPACETIME, 2, 0, 0, 3)
        for i in range(3):
            f = WeightField(G, SeedContext(2, 0, i))
            assert vals[i] == pytest.approx(ground_state(f, 5, GraphKind.SPACETIME, d=3)[0])


class TestInfluence:
    def test_unit_square(self):
        im = est.influence_map(G, (1, 1), 4000, 2)
        assert im.influence((1, 1)) == 1.0
        for v in [(1, 0), (0, 1)]:
            k = round(im.influence(v) * im.n)
            lo, hi = est.wilson_interval(k, im.n)
            assert lo <= 0.5 <= hi
        assert im.influence((0, 0)) == 0.0

    @given(st.integers(0, 10 ** 6), st.lists(st.integers(0, 5), min_size=2, max_size=3))
    def test_sum_identity(self, seed, x):
        im = est.influence_map(G, x, 20, seed)
        assert im.total == 20 * sum(x)
        assert (im.I >= 0).all() and (im.I <= 1).all()

    def test_cells_are_geodesics(self):
        x = (4, 3)
        cells, vals, _ = est.geodesic_samples(G, x, 1, 0, 0, 5)
        for i in range(5):
            f = WeightField(G, SeedContext(1, 0, i))
            geo = geodesic(f, (0, 0), x)
            flat = [a * (x[1] + 1) + b for a, b in geo.vertices().tolist()]
            assert cells[i].tolist() == flat
            assert vals[i] == pytest.approx(geo.value)

    def test_randomized_absolute_coordinates(self):
        im = est.influence_map(G, (4, 4), 50, 1, randomized_m=3)
        assert im.lo == (1, 1) and im.counts.shape == (7, 7)
        assert im.total == 50 * 8

    def test_weighted(self):
        im = est.weighted_influence_map(GAMMA, (6, 6), 200, 3)
        assert (im.J >= im.I - 1e-15).all()
        sums = im.path_sums
        np.testing.assert_allclose(sums[:, 0], sums[:, 1], rtol=0, atol=1e-10)
        assert im.J.sum() == pytest.approx(sums[:, 1].mean())

    def test_weighted_needs_gamma(self):
        with pytest.raises(ConfigError):
            est.weighted_influence_map(ONE, (2, 2), 5, 1)

    def test_spreading(self):
        a = est.influence_map(G, (16, 16), 2000, 4, randomized_m=1).max_influence()[0]
        b = est.influence_map(G, (16, 16), 2000, 4, randomized_m=8).max_influence()[0]
        assert b < a


class TestQuantile:
    def test_examples(self):
        assert est.empirical_quantile([4, 1, 3, 2], 0.5) == 2
        assert est.empirical_quantile([4, 1, 3, 2], 1e-9) == 1

    def test_errors(self):
        with pytest.raises(ValueError):
            est.empirical_quantile([], 0.5)
        with pytest.raises(ValueError):
            est.empirical_quantile([1.0], 1.0)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50),
           st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6))
    def test_monotone(self, xs, u, v):
        q = est.QuantileFn(np.array(xs))
        lo, hi = sorted((u, v))
        assert q(lo) <= q(hi)
        assert q(lo) in xs


class TestTail:
    def test_pointmass(self):
        rep = est.tail_report(ONE, (4, 4), [1, 2, 3], 1000, 1)
        assert rep.probs == [0.0, 0.0, 0.0]

    def test_normal_oracle(self):
        rep = est.tail_report(G, (16,), [1, 2, 3], 20_000, 7)
        for t, (lo, hi) in zip(rep.ts, rep.cis):
            assert lo <= est.normal_tail(t) <= hi
        assert rep.monotone

    @given(st.lists(st.floats(-50, 50), min_size=5, max_size=80))
    def test_monotone(self, xs):
        rep = est.tail_from_samples((4,), np.array(xs), [0.5, 1, 1.5, 2, 3])
        assert rep.monotone

    def test_envelope(self):
        rep = est.tail_from_samples((1,), np.array([0.0] * 90 + [5.0] * 10), [1, 2])
        assert rep.envelope_c == pytest.approx(-1 / math.log(rep.probs[0]))
        assert not rep.envelope_ok()

    def test_needs_samples(self):
        with pytest.raises(ValueError):
            est.tail_report(G, (4,), [1], 999, 0)


class TestShape:
    def test_pointmass(self):
        s = est.shape_estimate(ONE, (0.5, 0.5), 16, 5, 1)
        assert s.g_hat == 1.0 and s.ci == (1.0, 1.0)

    def test_plateau(self):
        s = est.shape_estimate(DistributionSpec.bernoulli(0.95), (0.5, 0.5), 512, 20, 1)
        assert s.g_hat >= 0.98

    def test_superadditive_means(self):
        s = est.shape_estimate(G, (0.5, 0.5), 64, 400, 2)
        means = [r["mean_over_N"] for r in s.dyadic]
        # mean T / N increases along doubling up to sampling error
        assert all(b >= a - 0.05 for a, b in zip(means, means[1:]))

    def test_direction_domain(self):
        with pytest.raises(ConfigError):
            est.lattice_target((-0.5, 1.0), 8)
        with pytest.raises(ConfigError):
            est.lattice_target((2.0, 1.0), 8, GraphKind.SPACETIME)


class TestConcavity:
    def test_pointmass(self):
        rep = est.concavity_gap(ONE, 8, 10, 1)
        assert rep.gap.mean == 0.0 and rep.gap.mean_ci == (0.0, 0.0)

    def test_unit(self):
        rep = est.concavity_gap(G, 1, 100_000, 3)
        assert rep.gap.mean == pytest.approx(MAX_TWO_NORMALS / 2, abs=4 * math.sqrt(rep.gap.variance / 1e5))

    def test_offset_targets(self):
        d, a = est.concavity_targets(4, 3, (0, 0, 0.25))
        assert d == (4, 4, 2) and a == (0, 8, 2)
        with pytest.raises(ConfigError):
            est.concavity_targets(4, 2, (0.5, 0))

    def test_gap_positive(self):
        rep = est.concavity_gap(G, 16, 400, 4)
        assert rep.gap.mean_ci[0] > 0


class TestWandering:
    def test_pointmass_deterministic(self):
        rows = est.wandering_samples(ONE, 8, 1, 0, 0, 5)
        assert (rows == rows[0]).all()
        rep = est.wandering_from_samples([8, 16], [rows, est.wandering_samples(ONE, 16, 1, 0, 0, 5)], 1)
        assert all(s.variance == 0 for s in rep.mid)

    def test_staircase_has_no_midpoint_displacement(self):
        # weights favour the cells on or next to the diagonal
        N = 6
        over = {(i, j): 10.0 for i in range(N + 1) for j in range(N + 1) if abs(i - j) <= 1}
        spec = DistributionSpec.pointmass(0.0)
        f = WeightField(spec, SeedContext(0), over)
        verts = geodesic(f, (0, 0), (N, N)).vertices()
        disp = np.abs(verts[:, 0] - verts[:, 1]) / 2
        assert disp[N - 1] == 0 and disp.max() == 0.5

    def test_columns(self):
        rows = est.wandering_samples(G, 8, 2, 0, 0, 30)
        assert (rows[:, 1] >= rows[:, 0]).all()
        assert ((rows * 2) % 1 == 0).all()


class TestLambertAndClamp:
    def test_lambert(self):
        assert est.lambert_bound(math.exp(-2), 1.0) == pytest.approx(1.0)
        assert est.lambert_bound(1.0, 5.0) < est.lambert_bound(2.0, 5.0)
        with pytest.raises(ValueError):
            est.lambert_bound(2.0, 2.0)

    def test_pointmass_clamped_zero(self):
        rep = est.clamped_variance_check(ONE, (8, 8), 0.125, 400, 1, None)
        assert rep.clamped.variance == 0.0 and rep.bound is None

    def test_contraction_near_half(self):
        rep = est.clamped_variance_check(G, (8, 8), 0.5 - 1e-3, 2000, 1, 1.25)
        assert rep.A <= rep.B and rep.contraction

    @given(st.lists(st.floats(-50, 50), min_size=200, max_size=300), st.floats(0.1, 0.45))
    def test_contraction_property(self, xs, u):
        x = np.array(xs)
        rep = est.clamped_variance_from_samples((4, 4), u, x, x[::-1].copy(), None, 0)
        assert rep.clamped.variance <= rep.raw.variance + 1e-12

    def test_gaussian_bound(self):
        rep = est.clamped_variance_check(G, (16, 16), 0.125, 2000, 2, 1.25082)
        assert rep.bound == pytest.approx(est.lambert_bound(1.25082 ** 2 * 0.125 ** 2 * 32, 0.25 * 32))
        assert rep.passed

    def test_small_u(self):
        with pytest.raises(DegenerateWindow):
            est.clamp_window_from_pilot(np.arange(100.0), 0.01)
        with pytest.raises(ValueError):
            est.clamp_window_from_pilot(np.arange(100.0), 0.6)


class TestShiftScaling:
    def test_pointmass(self):
        rep = est.shift_difference_scaling(ONE, [8, 16], 5, 1)
        assert rep.l2 == [1.0, 1.0] and rep.violations == 0
        assert rep.fit.slope == 0.0

    def test_gaussian(self):
        rep = est.shift_difference_scaling(G, [8, 16, 32], 200, 1)
        assert rep.violations == 0 and rep.checked > 0
        assert all(lo <= v <= hi for v, (lo, hi) in zip(rep.l2, rep.l2_ci))
