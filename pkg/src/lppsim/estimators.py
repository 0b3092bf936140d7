"""Monte Carlo estimators built on the passage kernels.

Every estimator is split into a per-sample engine that works on a range of
sample indices (``*_samples``) and a reducer that turns the concatenated
per-sample arrays into a report. Sample ``i`` of an experiment always uses
the same weight field, so results do not depend on how ranges are split.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from . import kernels
from .couplings import random_start
from .errors import ConfigError, DegenerateWindow
from .lattice import GraphKind, LatticePoint, as_point, cone_contains
from .passage import WeightField
from .randomness import DistributionSpec, SeedContext, sample_keys

BOOTSTRAP_RESAMPLES = 1000
CI_LEVEL = 0.95
TAIL_CI_LEVEL = 0.99
_BOOT_CELLS = 1 << 22
# above this many samples the CIs are normal-theory (bootstrap cost is n * resamples)
BOOTSTRAP_MAX_N = 200_000
_BATCH = 256


# ---------------------------------------------------------------- statistics


def _boot_rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([seed & ((1 << 64) - 1), tag & ((1 << 32) - 1), 0xB007])


def bootstrap(x: np.ndarray, stat, seed: int, tag: int = 0,
              resamples: int = BOOTSTRAP_RESAMPLES) -> np.ndarray:
    """Seeded bootstrap replicates of ``stat`` (applied along axis 1)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    rng = _boot_rng(seed, tag)
    out = np.empty(resamples)
    chunk = max(1, _BOOT_CELLS // max(n, 1))
    for a in range(0, resamples, chunk):
        b = min(resamples, a + chunk)
        idx = rng.integers(0, n, size=(b - a, n))
        out[a:b] = stat(x[idx])
    return out


def percentile_ci(reps: np.ndarray, level: float = CI_LEVEL) -> tuple[float, float]:
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(reps, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def _mean_rows(a):
    return a.mean(axis=1)


def _var_rows(a):
    return a.var(axis=1, ddof=1)


@dataclass
class SampleStats:
    """Mean, unbiased variance and bootstrap percentile CIs for both."""

    n: int
    mean: float
    variance: float
    mean_ci: tuple
    var_ci: tuple
    seed: int
    level: float = CI_LEVEL

    @classmethod
    def from_samples(cls, x, seed: int, tag: int = 0, level: float = CI_LEVEL,
                     resamples: int = BOOTSTRAP_RESAMPLES, bootstrap_ci: bool = True):
        x = np.asarray(x, dtype=np.float64)
        n = x.size
        if n < 2:
            raise ValueError("need at least two samples")
        mean = float(x.mean())
        var = float(x.var(ddof=1))
        if var == 0.0:
            return cls(n, mean, 0.0, (mean, mean), (0.0, 0.0), seed, level)
        if not bootstrap_ci or n > BOOTSTRAP_MAX_N:
            z = sstats.norm.ppf(0.5 + level / 2)
            half = z * math.sqrt(var / n)
            m4 = float(np.mean((x - mean) ** 4))
            vse = math.sqrt(max(m4 - var * var * (n - 3) / (n - 1), 0.0) / n)
            return cls(n, mean, var, (mean - half, mean + half),
                       (max(0.0, var - z * vse), var + z * vse), seed, level)
        mreps = bootstrap(x, _mean_rows, seed, tag, resamples)
        vreps = bootstrap(x, _var_rows, seed, tag + 1, resamples)
        mci = percentile_ci(mreps, level)
        vci = percentile_ci(vreps, level)
        # percentile intervals need not straddle the point estimate; widen to keep it inside
        mci = (min(mci[0], mean), max(mci[1], mean))
        vci = (min(vci[0], var), max(vci[1], var))
        return cls(n, mean, var, mci, vci, seed, level)

    def to_dict(self) -> dict:
        return {"n": self.n, "mean": self.mean, "variance": self.variance,
                "mean_ci": list(self.mean_ci), "var_ci": list(self.var_ci),
                "ci_level": self.level, "seed": self.seed}


def wilson_interval(k: int, n: int, level: float = TAIL_CI_LEVEL) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    z = sstats.norm.ppf(0.5 + level / 2)
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return float(max(0.0, centre - half)), float(min(1.0, centre + half))


@dataclass
class ExponentFit:
    slope: float
    intercept: float
    se: float
    dof: int

    def upper(self, level: float = CI_LEVEL) -> float:
        if self.dof <= 0 or not math.isfinite(self.se):
            return math.inf
        return self.slope + sstats.t.ppf(0.5 + level / 2, self.dof) * self.se

    def lower(self, level: float = CI_LEVEL) -> float:
        if self.dof <= 0 or not math.isfinite(self.se):
            return -math.inf
        return self.slope - sstats.t.ppf(0.5 + level / 2, self.dof) * self.se

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "se": self.se,
                "ci": [self.lower(), self.upper()], "dof": self.dof}


def fit_loglog(xs, ys) -> ExponentFit:
    """Unweighted least squares of log y on log x, with the slope's standard error."""
    lx = np.log(np.asarray(xs, dtype=np.float64))
    ly = np.log(np.asarray(ys, dtype=np.float64))
    k = lx.size
    if k < 2:
        raise ValueError("need at least two points to fit an exponent")
    res = sstats.linregress(lx, ly)
    se = float(res.stderr) if k > 2 else math.nan
    return ExponentFit(float(res.slope), float(res.intercept), se, k - 2)


@dataclass
class ScalingReport:
    Ns: list
    stats: list
    fit: ExponentFit | None
    used: list
    quantity: str = "variance"
    note: str = ""

    @property
    def chi(self) -> float | None:
        return None if self.fit is None else self.fit.slope

    @property
    def refused(self) -> bool:
        return self.fit is None

    def to_dict(self) -> dict:
        return {"Ns": list(self.Ns), "quantity": self.quantity,
                "per_N": [s.to_dict() for s in self.stats],
                "fit": None if self.fit is None else self.fit.to_dict(),
                "fit_Ns": list(self.used), "note": self.note}


def scaling_from_samples(Ns, samples: list, seed: int, tag: int = 0) -> ScalingReport:
    """Fit log var against log N over the Ns whose variance CI excludes 0."""
    stats = [SampleStats.from_samples(s, seed, tag + 2 * i) for i, s in enumerate(samples)]
    used = [N for N, s in zip(Ns, stats) if s.var_ci[0] > 0]
    if len(used) < 2:
        return ScalingReport(list(Ns), stats, None, used,
                             note="fit refused: fewer than two variances bounded away from 0")
    ys = [s.variance for N, s in zip(Ns, stats) if N in used]
    return ScalingReport(list(Ns), stats, fit_loglog(used, ys), used)


# ---------------------------------------------------------------- per-sample engines


def _keys(seed, experiment_id, start, stop):
    return sample_keys(seed, experiment_id, np.arange(start, stop))


def passage_samples(spec: DistributionSpec, x, seed: int, experiment_id: int,
                    start: int, stop: int, origin=None) -> np.ndarray:
    """T(origin, x) on the fields of samples start..stop-1 (origin defaults to 0)."""
    x = np.asarray(x, dtype=np.int64)
    lo = np.zeros_like(x) if origin is None else np.asarray(origin, dtype=np.int64)
    if (x < lo).any():
        raise ConfigError("target must dominate the origin")
    out = np.empty(stop - start)
    params = spec.kernel_params()
    for a in range(start, stop, _BATCH * 16):
        b = min(stop, a + _BATCH * 16)
        out[a - start:b - start] = kernels.ordered_batch(
            spec.code, params, _keys(seed, experiment_id, a, b), lo, x - lo + 1, -1)
    return out


def ground_samples(spec: DistributionSpec, N: int, d: int, kind: GraphKind, seed: int,
                   experiment_id: int, start: int, stop: int) -> np.ndarray:
    """Ground-state values max_{level N} T(0, .) on samples start..stop-1."""
    out = np.empty(stop - start)
    params = spec.kernel_params()
    for a in range(start, stop, _BATCH * 16):
        b = min(stop, a + _BATCH * 16)
        keys = _keys(seed, experiment_id, a, b)
        if kind is GraphKind.ORDERED:
            shape = np.full(d, N + 1, dtype=np.int64)
            vals = kernels.ordered_batch(spec.code, params, keys, np.zeros(d, np.int64), shape, N)
        else:
            vals = kernels.spacetime_ground_batch(spec.code, params, keys, N, d)
        out[a - start:b - start] = vals
    return out


def _ordered_geodesic(fld: WeightField, lo: np.ndarray, hi: np.ndarray):
    """Weights, passage values and the canonical geodesic of the box [lo, hi]."""
    shape = hi - lo + 1
    w = fld.box(lo, hi)
    T, back = kernels.ordered_dp(np.ascontiguousarray(w.reshape(-1)), shape)
    strides = np.ones(len(shape), dtype=np.int64)
    for k in range(len(shape) - 2, -1, -1):
        strides[k] = strides[k + 1] * shape[k + 1]
    seq = kernels.backtrack(back, strides, T.size - 1, 0, int(shape.sum() - len(shape)))
    cells = np.cumsum(strides[seq])
    return w.reshape(-1), T, cells, strides


def geodesic_samples(spec: DistributionSpec, x, seed: int, experiment_id: int,
                     start: int, stop: int, m: int | None = None):
    """Canonical geodesics of T(Z, x + Z) (Z = 0 when ``m`` is None).

    Returns (cells, T, weights): cells are flat indices into the box
    [0, x] (or [1, x + m] with a randomized start), one row per sample.
    """
    x = np.asarray(x, dtype=np.int64)
    d = x.size
    L = int(x.sum())
    if m is None:
        box_lo, box_shape = np.zeros(d, np.int64), x + 1
    else:
        box_lo, box_shape = np.ones(d, np.int64), x + m
    bstr = np.ones(d, dtype=np.int64)
    for k in range(d - 2, -1, -1):
        bstr[k] = bstr[k + 1] * box_shape[k + 1]
    cells = np.empty((stop - start, L), dtype=np.int64)
    vals = np.empty(stop - start)
    ws = np.empty((stop - start, L))
    for r, i in enumerate(range(start, stop)):
        ctx = SeedContext(seed, experiment_id, i)
        fld = WeightField(spec, ctx)
        z = np.zeros(d, np.int64) if m is None else np.asarray(random_start(ctx, m, d).Z)
        w, T, loc, strides = _ordered_geodesic(fld, z, z + x)
        # local flat index -> absolute coordinates -> flat index in the report box
        coords = np.stack(np.unravel_index(loc, tuple(x + 1)), axis=1) + z - box_lo
        cells[r] = coords @ bstr
        vals[r] = T[-1]
        ws[r] = w[loc]
    return cells, vals, ws


def shift_samples(spec: DistributionSpec, N: int, d: int, seed: int, experiment_id: int,
                  start: int, stop: int, tol: float = 1e-9):
    """h(Nu) = T(-e1, Nu) - T(0, Nu) plus geodesic monotonicity checks.

    For every a >= 0 on the canonical geodesic -e1 -> Nu the check is
    h(Nu) <= h(a) up to ``tol`` relative rounding slack. Returns
    (h values, violation counts, checked-point counts).
    """
    hs = np.empty(stop - start)
    bad = np.zeros(stop - start, dtype=np.int64)
    checked = np.zeros(stop - start, dtype=np.int64)
    lo = np.array((-1,) + (0,) * (d - 1), dtype=np.int64)
    hi = np.full(d, N, dtype=np.int64)
    shape0 = hi + 1
    for r, i in enumerate(range(start, stop)):
        fld = WeightField(spec, SeedContext(seed, experiment_id, i))
        w, Tm, loc, strides = _ordered_geodesic(fld, lo, hi)
        w0 = np.ascontiguousarray(w.reshape(tuple(hi - lo + 1))[1:].reshape(-1))
        T0, _ = kernels.ordered_dp(w0, shape0)
        h_end = Tm[-1] - T0[-1]
        hs[r] = h_end
        # cells with first coordinate >= 0 are reachable from 0; shift to the 0-box
        inner = loc[loc >= strides[0]] - strides[0]
        h_path = Tm[inner + strides[0]] - T0[inner]
        slack = tol * (1.0 + abs(Tm[-1]) + np.abs(Tm[inner + strides[0]]))
        bad[r] = int((h_end > h_path + slack).sum())
        checked[r] = inner.size
    return hs, bad, checked


# ---------------------------------------------------------------- reports


def mc_passage_stats(spec: DistributionSpec, x, n: int, seed: int,
                     experiment_id: int = 0) -> SampleStats:
    if n < 2:
        raise ValueError("n must be at least 2")
    return SampleStats.from_samples(passage_samples(spec, x, seed, experiment_id, 0, n), seed)


def variance_scaling(spec: DistributionSpec, direction, Ns, n: int, seed: int,
                     experiment_id: int = 0) -> ScalingReport:
    direction = np.asarray(direction, dtype=np.int64)
    samples = [passage_samples(spec, N * direction, seed, experiment_id + k, 0, n)
               for k, N in enumerate(Ns)]
    return scaling_from_samples(Ns, samples, seed)


def polymer_variance(spec: DistributionSpec, Ns, n: int, kind: GraphKind, d: int,
                     seed: int, experiment_id: int = 0) -> ScalingReport:
    samples = [ground_samples(spec, N, d, kind, seed, experiment_id + k, 0, n)
               for k, N in enumerate(Ns)]
    return scaling_from_samples(Ns, samples, seed)


def scaled_variance_stats(samples, N: int, seed: int, tag: int = 0) -> SampleStats:
    """Stats of T / sqrt(N) so that the variance reads var(T) / N."""
    return SampleStats.from_samples(np.asarray(samples) / math.sqrt(N), seed, tag)


@dataclass
class InfluenceMap:
    """Empirical influences on a box with lower corner ``lo``.

    ``counts[v - lo]`` is the number of sampled geodesics through v;
    ``weighted`` (if present) accumulates (1 + w(v)) over those samples.
    """

    x: LatticePoint
    n: int
    lo: LatticePoint
    counts: np.ndarray
    weighted: np.ndarray | None = None
    m: int | None = None
    path_sums: np.ndarray | None = field(default=None, repr=False)

    @property
    def I(self) -> np.ndarray:
        return self.counts / self.n

    @property
    def J(self) -> np.ndarray | None:
        return None if self.weighted is None else self.weighted / self.n

    def influence(self, v) -> float:
        return float(self.I[tuple(np.asarray(v) - np.asarray(self.lo))])

    def max_influence(self) -> tuple[float, LatticePoint]:
        k = int(np.argmax(self.counts))
        idx = np.unravel_index(k, self.counts.shape)
        return float(self.counts[idx] / self.n), LatticePoint(np.asarray(idx) + np.asarray(self.lo))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_dict(self) -> dict:
        mx, arg = self.max_influence()
        lo, hi = wilson_interval(int(round(mx * self.n)), self.n, CI_LEVEL)
        out = {"x": list(self.x), "n": self.n, "m": self.m, "box_lo": list(self.lo),
               "sum_I": self.total / self.n, "max_I": mx, "argmax": list(arg),
               "max_I_ci": [lo, hi]}
        if self.weighted is not None:
            out["sum_J"] = float(self.J.sum())
        return out

    def rows(self):
        """(coords, I, J) for every visited vertex, in C order."""
        for k in np.flatnonzero(self.counts.reshape(-1)):
            idx = np.unravel_index(k, self.counts.shape)
            coords = list(np.asarray(idx) + np.asarray(self.lo))
            J = None if self.weighted is None else float(self.weighted[idx] / self.n)
            yield coords, float(self.counts[idx] / self.n), J


def influence_from_cells(x, cells: np.ndarray, m: int | None = None,
                         weights: np.ndarray | None = None, vals=None) -> InfluenceMap:
    x = as_point(x)
    shape = tuple(np.asarray(x) + (1 if m is None else m))
    lo = LatticePoint((0 if m is None else 1,) * x.dim)
    size = int(np.prod(shape))
    counts = np.bincount(cells.reshape(-1), minlength=size).reshape(shape)
    weighted = None
    if weights is not None:
        # accumulate in sample order so the reduction is independent of sharding
        weighted = np.zeros(size)
        for row_c, row_w in zip(cells, weights):
            weighted[row_c] += 1.0 + row_w
        weighted = weighted.reshape(shape)
    sums = None
    if weights is not None and vals is not None:
        sums = np.stack([(1.0 + weights).sum(axis=1), x.norm1 + np.asarray(vals)], axis=1)
    return InfluenceMap(x, cells.shape[0], lo, counts, weighted, m, sums)


def influence_map(spec: DistributionSpec, x, n: int, seed: int, experiment_id: int = 0,
                  randomized_m: int | None = None) -> InfluenceMap:
    cells, _, _ = geodesic_samples(spec, x, seed, experiment_id, 0, n, randomized_m)
    return influence_from_cells(x, cells, randomized_m)


def weighted_influence_map(spec: DistributionSpec, x, n: int, seed: int,
                           experiment_id: int = 0) -> InfluenceMap:
    if spec.name != "gamma":
        raise ConfigError("weighted influences are defined for gamma weights only")
    cells, vals, ws = geodesic_samples(spec, x, seed, experiment_id, 0, n)
    return influence_from_cells(x, cells, None, ws, vals)


@dataclass
class QuantileFn:
    """Lower empirical quantile: h(u) is the order statistic at index ceil(u n)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=np.float64))
        if v.size == 0:
            raise ValueError("empty sample")
        self.values = v

    def __call__(self, u: float) -> float:
        if not 0.0 < u < 1.0:
            raise ValueError("u must lie in (0, 1)")
        k = max(1, math.ceil(u * self.values.size))
        return float(self.values[k - 1])


def empirical_quantile(samples, u: float) -> float:
    return QuantileFn(np.asarray(samples))(u)


@dataclass
class TailReport:
    x: LatticePoint
    ts: list
    n: int
    mean: float
    probs: list
    cis: list
    envelope_c: float | None
    envelope: list

    @property
    def monotone(self) -> bool:
        return all(a >= b for a, b in zip(self.probs, self.probs[1:]))

    def envelope_ok(self, factor: float = 1.5) -> bool:
        if self.envelope_c is None:
            return False
        return all(p <= factor * e for t, p, e in zip(self.ts, self.probs, self.envelope) if t > 1)

    def to_dict(self) -> dict:
        return {"x": list(self.x), "n": self.n, "mean": self.mean, "ts": list(self.ts),
                "p": list(self.probs), "ci": [list(c) for c in self.cis],
                "ci_level": TAIL_CI_LEVEL, "envelope_c": self.envelope_c,
                "envelope": list(self.envelope), "monotone": self.monotone}


def tail_from_samples(x, values: np.ndarray, ts) -> TailReport:
    x = as_point(x)
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    mean = float(values.mean())
    dev = np.abs(values - mean)
    scale = math.sqrt(x.norm1)
    counts = [int((dev >= t * scale).sum()) for t in ts]
    probs = [k / n for k in counts]
    cis = [wilson_interval(k, n) for k in counts]
    c = None
    env = []
    p1 = probs[list(ts).index(1)] if 1 in list(ts) else None
    if p1 is not None and p1 < 1.0:
        c = 0.0 if p1 == 0.0 else -1.0 / math.log(p1)
        env = [math.exp(-t * t / c) if c > 0 else 0.0 for t in ts]
    return TailReport(x, list(ts), n, mean, probs, cis, c, env)


def tail_report(spec: DistributionSpec, x, ts, n: int, seed: int,
                experiment_id: int = 0) -> TailReport:
    if n < 1000:
        raise ValueError("tail estimates need n >= 1000")
    return tail_from_samples(x, passage_samples(spec, x, seed, experiment_id, 0, n), ts)


def normal_tail(t: float) -> float:
    """P(|G| >= t) for a standard normal G."""
    return float(2.0 * sstats.norm.sf(t))


@dataclass
class ShapeEstimate:
    direction: tuple
    N: int
    target: LatticePoint
    g_hat: float
    ci: tuple
    dyadic: list

    def to_dict(self) -> dict:
        return {"direction": list(self.direction), "N": self.N, "target": list(self.target),
                "g_hat": self.g_hat, "ci": list(self.ci), "dyadic": self.dyadic}


def lattice_target(direction, N: int, kind: GraphKind = GraphKind.ORDERED) -> LatticePoint:
    x = np.asarray(direction, dtype=np.float64)
    if kind is GraphKind.ORDERED:
        if (x < 0).any():
            raise ConfigError("ordered directions must be nonnegative")
    elif not cone_contains(x):
        raise ConfigError("space-time directions must lie in the cone")
    return LatticePoint(np.floor(N * x + 1e-12).astype(np.int64))


def shape_estimate(spec: DistributionSpec, direction, N: int, n: int, seed: int,
                   experiment_id: int = 0) -> ShapeEstimate:
    """g(x) ~ mean T(0, floor(N x)) / N, plus mean T / k along dyadic k <= N."""
    target = lattice_target(direction, N)
    vals = passage_samples(spec, target, seed, experiment_id, 0, n)
    st = SampleStats.from_samples(vals, seed)
    dyadic = []
    k = 1
    while k < N:
        t = lattice_target(direction, k)
        if sum(t) > 0:
            v = passage_samples(spec, t, seed, experiment_id + 1000 + k, 0, n)
            dyadic.append({"N": k, "mean_over_N": float(v.mean() / k)})
        k *= 2
    dyadic.append({"N": N, "mean_over_N": st.mean / N})
    return ShapeEstimate(tuple(float(c) for c in direction), N, target, st.mean / N,
                         (st.mean_ci[0] / N, st.mean_ci[1] / N), dyadic)


@dataclass
class GapReport:
    N: int
    mean_diagonal: float
    mean_axis: float
    gap: SampleStats

    def to_dict(self) -> dict:
        return {"N": self.N, "diagonal_over_2N": self.mean_diagonal,
                "axis_over_2N": self.mean_axis, "gap": self.gap.to_dict()}


def concavity_targets(N: int, d: int = 2, offset=None) -> tuple[LatticePoint, LatticePoint]:
    """2N(e1/2 + e2/2 + x) and 2N(e2 + x), floored."""
    x = np.zeros(d) if offset is None else np.asarray(offset, dtype=np.float64)
    if offset is not None and (d < 3 or x[0] != 0 or x[1] != 0):
        raise ConfigError("offsets live on the coordinates beyond the second (d >= 3)")
    extra = np.floor(2 * N * x + 1e-12).astype(np.int64)
    diag = np.zeros(d, np.int64)
    diag[0] = diag[1] = N
    axis = np.zeros(d, np.int64)
    axis[1] = 2 * N
    return LatticePoint(diag + extra), LatticePoint(axis + extra)


def concavity_from_samples(N: int, diag: np.ndarray, axis: np.ndarray, seed: int) -> GapReport:
    scale = 2.0 * N
    gap = SampleStats.from_samples((diag - axis) / scale, seed)
    return GapReport(N, float(diag.mean() / scale), float(axis.mean() / scale), gap)


def concavity_gap(spec: DistributionSpec, N: int, n: int, seed: int, d: int = 2,
                  offset=None, experiment_id: int = 0) -> GapReport:
    """Paired estimate on shared fields of the diagonal-versus-axis gap."""
    diag_t, axis_t = concavity_targets(N, d, offset)
    diag = passage_samples(spec, diag_t, seed, experiment_id, 0, n)
    axis = passage_samples(spec, axis_t, seed, experiment_id, 0, n)
    return concavity_from_samples(N, diag, axis, seed)


def wandering_samples(spec: DistributionSpec, N: int, seed: int, experiment_id: int,
                      start: int, stop: int) -> np.ndarray:
    """(midpoint displacement, max displacement) of geodesics 0 -> (N, N)."""
    cells, _, _ = geodesic_samples(spec, (N, N), seed, experiment_id, start, stop)
    v1, v2 = np.divmod(cells, N + 1)
    disp = np.abs(v1 - v2) / 2.0
    mid = disp[:, N - 1]  # vertex number N sits at level N
    return np.stack([mid, disp.max(axis=1)], axis=1)


@dataclass
class WanderingReport:
    Ns: list
    mid: list
    maxes: list
    fit: ExponentFit | None

    def to_dict(self) -> dict:
        return {"Ns": list(self.Ns), "midpoint": [s.to_dict() for s in self.mid],
                "max": [s.to_dict() for s in self.maxes],
                "fit": None if self.fit is None else self.fit.to_dict()}


def wandering_from_samples(Ns, samples: list, seed: int) -> WanderingReport:
    mid = [SampleStats.from_samples(s[:, 0], seed, 2 * i) for i, s in enumerate(samples)]
    mx = [SampleStats.from_samples(s[:, 1], seed, 2 * i + 1) for i, s in enumerate(samples)]
    ok = [(N, s.mean) for N, s in zip(Ns, mid) if s.mean > 0]
    fit = fit_loglog(*zip(*ok)) if len(ok) >= 2 else None
    return WanderingReport(list(Ns), mid, mx, fit)


def wandering_stats(spec: DistributionSpec, Ns, n: int, seed: int,
                    experiment_id: int = 0) -> WanderingReport:
    samples = [wandering_samples(spec, N, seed, experiment_id + k, 0, n) for k, N in enumerate(Ns)]
    return wandering_from_samples(Ns, samples, seed)


def lambert_bound(a: float, b: float) -> float:
    """2b / log(b / a), defined for b > a > 0."""
    if not (a > 0 and b > a):
        raise ValueError(f"need b > a > 0, got a={a}, b={b}")
    return 2.0 * b / math.log(b / a)


@dataclass
class ClampedVarianceReport:
    x: LatticePoint
    u: float
    A: float
    B: float
    c_G: float | None
    raw: SampleStats
    clamped: SampleStats
    bound: float | None

    @property
    def passed(self) -> bool:
        return self.bound is not None and self.clamped.var_ci[1] <= self.bound

    @property
    def contraction(self) -> bool:
        return self.clamped.variance <= self.raw.variance

    def to_dict(self) -> dict:
        return {"x": list(self.x), "u": self.u, "A": self.A, "B": self.B,
                "c_G": self.c_G, "raw": self.raw.to_dict(), "clamped": self.clamped.to_dict(),
                "bound": self.bound, "contraction": self.contraction, "pass": self.passed}


def clamp_window_from_pilot(pilot: np.ndarray, u: float, min_tail: int = 20) -> tuple[float, float]:
    """(h(u), h(2u)) from lower empirical quantiles of a pilot run (A == B allowed)."""
    if not 0 < u < 0.5:
        raise ValueError("u must lie in (0, 1/2)")
    if u * pilot.size < min_tail:
        raise DegenerateWindow(f"u = {u} is too small for a pilot of {pilot.size} samples")
    q = QuantileFn(pilot)
    return q(u), q(2 * u)


def clamped_variance_from_samples(x, u: float, pilot: np.ndarray, fresh: np.ndarray,
                                  c_G: float | None, seed: int) -> ClampedVarianceReport:
    x = as_point(x)
    A, B = clamp_window_from_pilot(np.asarray(pilot), u)
    fresh = np.asarray(fresh, dtype=np.float64)
    raw = SampleStats.from_samples(fresh, seed, 0)
    clamped = SampleStats.from_samples(np.clip(fresh, A, B), seed, 2)
    bound = None
    if c_G is not None:
        bound = lambert_bound(c_G * c_G * u * u * x.norm1, 2.0 * u * x.norm1)
    return ClampedVarianceReport(x, u, A, B, c_G, raw, clamped, bound)


def clamped_variance_check(spec: DistributionSpec, x, u: float, n: int, seed: int,
                           c_G: float | None, experiment_id: int = 0,
                           pilot_n: int | None = None) -> ClampedVarianceReport:
    """Pilot run on samples n.. for the window, fresh samples 0..n-1 for the variance."""
    pilot_n = n if pilot_n is None else pilot_n
    fresh = passage_samples(spec, x, seed, experiment_id, 0, n)
    pilot = passage_samples(spec, x, seed, experiment_id, n, n + pilot_n)
    return clamped_variance_from_samples(x, u, pilot, fresh, c_G, seed)


@dataclass
class ShiftReport:
    Ns: list
    l2: list
    l2_ci: list
    fit: ExponentFit | None
    violations: int
    checked: int

    def to_dict(self) -> dict:
        return {"Ns": list(self.Ns), "l2": list(self.l2), "l2_ci": [list(c) for c in self.l2_ci],
                "fit": None if self.fit is None else self.fit.to_dict(),
                "violations": self.violations, "checked": self.checked}


def shift_from_samples(Ns, hs: list, bad: list, checked: list, seed: int) -> ShiftReport:
    l2, cis = [], []
    for i, h in enumerate(hs):
        h = np.asarray(h)
        l2.append(float(math.sqrt(np.mean(h * h))))
        if np.all(h == h[0]):
            cis.append((l2[-1], l2[-1]))
            continue
        reps = bootstrap(h * h, _mean_rows, seed, 2 * i)
        lo, hi = percentile_ci(reps)
        cis.append((math.sqrt(lo), math.sqrt(hi)))
    fit = fit_loglog(Ns, l2) if len(Ns) >= 2 and min(l2) > 0 else None
    return ShiftReport(list(Ns), l2, cis, fit, int(sum(int(np.sum(b)) for b in bad)),
                       int(sum(int(np.sum(c)) for c in checked)))


def shift_difference_scaling(spec: DistributionSpec, Ns, n: int, seed: int, d: int = 2,
                             experiment_id: int = 0) -> ShiftReport:
    hs, bad, checked = [], [], []
    for k, N in enumerate(Ns):
        h, b, c = shift_samples(spec, N, d, seed, experiment_id + k, 0, n)
        hs.append(h)
        bad.append(b)
        checked.append(c)
    return shift_from_samples(Ns, hs, bad, checked, seed)
