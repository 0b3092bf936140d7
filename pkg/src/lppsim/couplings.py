"""Coupling constructions: randomized start, the phi environment, reflection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import BoxError, DimensionMismatch
from .lattice import GraphKind, HyperplaneL, LatticePoint, ReflectHalf, as_point, reflect_points
from .passage import WeightField, box_points, passage_grid
from .randomness import ClampWindow, DistributionSpec, SeedContext, clamp, sample_weights

WEIGHT_STREAM = 0
BITS_STREAM = 1
PHI_STREAM = 2

_FAIR = DistributionSpec.bernoulli(0.5)


# ---------------------------------------------------------------- randomized start


def tent(t, m: int):
    """Fold Z_{2m} onto {0, .., m-1}: t for t < m, else 2m - 1 - t."""
    t = np.asarray(t)
    return np.where(t < m, t, 2 * m - 1 - t)


def start_from_sums(sums, m: int) -> np.ndarray:
    return 1 + tent(np.asarray(sums) % (2 * m), m)


@dataclass(frozen=True)
class RandomizedStart:
    """Start point in {1..m}^d built from d blocks of m^2 fair bits.

    Coordinate i is 1 + tent(S_i mod 2m) with S_i the sum of block i; a
    single bit flip moves S_i by one and hence Z by at most one step.
    """

    m: int
    d: int
    bits: np.ndarray = field(repr=False)
    Z: LatticePoint = None

    def flip(self, s: int) -> "RandomizedStart":
        bits = self.bits.copy()
        bits[s] ^= 1
        return build_randomized_start(bits, self.m, self.d)

    @property
    def sums(self) -> np.ndarray:
        return self.bits.reshape(self.d, self.m * self.m).sum(axis=1)


def build_randomized_start(bits, m: int, d: int) -> RandomizedStart:
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if m < 1 or d < 1:
        raise ValueError("m and d must be positive")
    if bits.size != d * m * m:
        raise ValueError(f"expected {d * m * m} bits, got {bits.size}")
    if (bits > 1).any():
        raise ValueError("bits must be 0 or 1")
    sums = bits.reshape(d, m * m).sum(axis=1)
    Z = LatticePoint(start_from_sums(sums, m))
    return RandomizedStart(m, d, bits, Z)


def random_bits(ctx: SeedContext, count: int) -> np.ndarray:
    """Fair bits from the dedicated bit stream of ``ctx`` (independent of weights)."""
    pts = np.arange(count, dtype=np.int64)[:, None]
    return sample_weights(_FAIR, ctx.substream(BITS_STREAM), pts).astype(np.uint8)


def random_start(ctx: SeedContext, m: int, d: int) -> RandomizedStart:
    return build_randomized_start(random_bits(ctx, d * m * m), m, d)


@dataclass
class StartCertificate:
    m: int
    trials: int
    exhaustive: bool
    max_flip_move: int
    max_point_mass: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.max_flip_move <= 1 and self.max_point_mass <= self.bound

    def to_dict(self) -> dict:
        return {"m": self.m, "trials": self.trials, "exhaustive": self.exhaustive,
                "max_flip_move": self.max_flip_move, "max_point_mass": self.max_point_mass,
                "bound": self.bound, "passed": self.passed}


def certify_start_exhaustive(m: int) -> StartCertificate:
    """All 2^(m^2) bit vectors of one coordinate: flip moves and point masses."""
    n = m * m
    if n > 24:
        raise ValueError("exhaustive certification is limited to m <= 4")
    vecs = np.arange(1 << n, dtype=np.int64)
    bits = (vecs[:, None] >> np.arange(n)) & 1
    sums = bits.sum(axis=1)
    Z = start_from_sums(sums, m)
    # flipping bit s moves the sum by +1 (bit was 0) or -1
    moved = np.where(bits == 0, sums[:, None] + 1, sums[:, None] - 1)
    move = np.abs(start_from_sums(moved, m) - Z[:, None]).max()
    mass = np.bincount(Z, minlength=m + 1)[1:] / vecs.size
    return StartCertificate(m, int(vecs.size), True, int(move), float(mass.max()), 4.0 / m)


def certify_start_random(m: int, trials: int, ctx: SeedContext) -> StartCertificate:
    """Monte Carlo version for larger m, with seeded bits and flip positions."""
    n = m * m
    pts = np.stack(np.meshgrid(np.arange(trials), np.arange(n), indexing="ij"), -1).reshape(-1, 2)
    bits = sample_weights(_FAIR, ctx.substream(BITS_STREAM), pts).reshape(trials, n)
    sums = bits.sum(axis=1).astype(np.int64)
    Z = start_from_sums(sums, m)
    u = sample_weights(DistributionSpec.uniform(), ctx.substream(BITS_STREAM + 16),
                       np.arange(trials)[:, None])
    s = np.minimum((u * n).astype(np.int64), n - 1)
    flipped = bits[np.arange(trials), s]
    moved = np.where(flipped == 0, sums + 1, sums - 1)
    move = int(np.abs(start_from_sums(moved, m) - Z).max())
    mass = np.bincount(Z, minlength=m + 1)[1:] / trials
    return StartCertificate(m, trials, False, move, float(mass.max()), 4.0 / m)


def shifted_passage(fld, Z: RandomizedStart, x, w: ClampWindow | None = None) -> float:
    """clamp(T(Z, x + Z), w) on the shared field."""
    x = as_point(x)
    if x.dim != Z.d:
        raise DimensionMismatch("x and Z differ in dimension")
    start = Z.Z
    t = passage_grid(fld, start, start + x).value(start + x)
    return float(clamp(t, w)) if w is not None else t


@dataclass
class DiscrepancyStat:
    """Samples of |f(w) - f(w with bit s flipped)| for f = clamp(T(Z, x + Z)).

    For a fair bit, 2 ||Delta_s f||_2 equals the L2 norm of these samples
    exactly (flipping the bit is the resampling that changes it).
    """

    s: int
    samples: np.ndarray
    bounds: np.ndarray

    @property
    def l2(self) -> float:
        return float(np.sqrt(np.mean(self.samples ** 2))) if self.samples.size else 0.0

    @property
    def bound_violations(self) -> int:
        return int((self.samples > self.bounds + 1e-9 * (1.0 + np.abs(self.bounds))).sum())

    def to_dict(self) -> dict:
        return {"bit": self.s, "n": int(self.samples.size), "l2": self.l2,
                "mean": float(self.samples.mean()) if self.samples.size else 0.0,
                "bound_violations": self.bound_violations,
                "convention": "flip of a fair bit; equals 2||Delta_s f||_2"}


def bit_flip_discrepancy(spec: DistributionSpec, m: int, x, s: int, n: int,
                         seed: int, experiment_id: int = 0,
                         w: ClampWindow | None = None) -> DiscrepancyStat:
    """Per-sample discrepancy and its triangle-inequality bound.

    With Z' the flipped start, E = x + Z and E' = x + Z' the bound is
    |T(Z, E) - T(Z', E)| + |T(Z', E) - T(Z', E')|.
    """
    x = as_point(x)
    d = x.dim
    if not 0 <= s < d * m * m:
        raise ValueError(f"bit index {s} out of range")
    disc = np.empty(n)
    bound = np.empty(n)
    for i in range(n):
        ctx = SeedContext(seed, experiment_id, i, WEIGHT_STREAM)
        fld = WeightField(spec, ctx)
        Z = random_start(ctx, m, d)
        Zf = Z.flip(s)
        a, b = Z.Z, Zf.Z
        hi = LatticePoint(np.maximum(a, b)) + x
        ga = passage_grid(fld, a, hi)
        gb = passage_grid(fld, b, hi)
        f0 = ga.value(a + x)
        f1 = gb.value(b + x)
        if w is not None:
            f0, f1 = clamp(f0, w), clamp(f1, w)
        disc[i] = abs(f0 - f1)
        # route through T(Z', E) when Z' <= E, else through T(Z, E')
        if all(p <= q for p, q in zip(b, a + x)):
            t_mid = gb.value(a + x)
        else:
            t_mid = ga.value(b + x)
        bound[i] = abs(ga.value(a + x) - t_mid) + abs(t_mid - gb.value(b + x))
    return DiscrepancyStat(s, disc, bound)


# ---------------------------------------------------------------- phi coupling


@dataclass
class PhiCoupling:
    """The phi environment and the map v -> x(v) on {0} x Z_+^(d-1).

    ``phi`` is a field on an auxiliary stream whose overrides carry the
    transplanted base weights phi(xhat(v)) = omega(v).
    """

    base: WeightField
    phi: WeightField
    levels: int
    x_of: dict
    xhat: dict
    j_of: dict
    T_base: np.ndarray = field(repr=False)
    T_phi: np.ndarray = field(repr=False)

    def pairs(self):
        """(v, x(v), T(0, v), T_phi(0, x(v))) for every constructed v."""
        for v, xv in self.x_of.items():
            yield v, xv, float(self.T_base[v]), float(self.T_phi[xv])

    def violations(self) -> list:
        return [v for v, _, t, tp in self.pairs() if not tp >= t]

    def off_segment(self) -> list:
        bad = []
        for v, xv in self.x_of.items():
            alpha = xv[0]
            want = (alpha, v[1] - alpha) + tuple(v[2:])
            if not (0 <= alpha <= v[1] and tuple(xv) == want):
                bad.append(v)
        return bad

    def trace(self) -> list:
        rows = []
        for v in sorted(self.x_of, key=lambda t: (sum(t), t)):
            rows.append({"v": list(v), "level": sum(v),
                         "j": self.j_of.get(v), "xhat": list(self.xhat.get(v, v)),
                         "x": list(self.x_of[v]),
                         "T": float(self.T_base[v]), "T_phi": float(self.T_phi[self.x_of[v]])})
        return rows


def build_phi(base: WeightField, N: int, d: int = 2,
              aux: SeedContext | None = None) -> PhiCoupling:
    """Three-stage level-by-level construction up to level N.

    Stage 1 picks j_v in {2..d} maximizing T(0, v - e_j), sets
    xhat(v) = x(v - e_j) + e_j and phi(xhat(v)) = omega(v). Stage 2 leaves every
    other phi value at level k to an independent auxiliary draw. Stage 3 keeps
    xhat(v) unless j_v = 2 and the point one step along e_1 - e_2 carries a
    strictly larger phi weight (ties keep xhat(v)).
    Direction indices in ``j_of`` are 1-based to match e_1..e_d.
    """
    if d < 2:
        raise DimensionMismatch("the phi construction needs d >= 2")
    if aux is None:
        aux = base.ctx.substream(PHI_STREAM)
    zero = (0,) * d
    corner = LatticePoint((N,) * d)
    T = passage_grid(base, LatticePoint(zero), corner).values
    x_of = {zero: zero}
    xhat: dict = {}
    j_of: dict = {}
    over = {zero: base.weight(zero)}
    aux_field = WeightField(base.spec, aux)
    for k in range(1, N + 1):
        level = [v for v in _slice_level(k, d)]
        # stage 1
        for v in level:
            best, bj = -np.inf, 0
            for j in range(1, d):
                if v[j] > 0:
                    u = v[:j] + (v[j] - 1,) + v[j + 1:]
                    if T[u] > best:
                        best, bj = T[u], j
            u = v[:bj] + (v[bj] - 1,) + v[bj + 1:]
            xu = x_of[u]
            xh = xu[:bj] + (xu[bj] + 1,) + xu[bj + 1:]
            xhat[v] = xh
            j_of[v] = bj + 1
            over[xh] = base.weight(v)
        # stages 2 and 3; stage 2 is implicit in the auxiliary field
        for v in level:
            xh = xhat[v]
            if j_of[v] > 2:
                x_of[v] = xh
                continue
            alt = (xh[0] + 1, xh[1] - 1) + xh[2:]
            a_val = over.get(xh)
            b_val = over[alt] if alt in over else float(aux_field.weight(alt))
            x_of[v] = alt if b_val > a_val else xh
    phi = WeightField(base.spec, aux, over)
    T_phi = passage_grid(phi, LatticePoint(zero), corner).values
    return PhiCoupling(base, phi, N, x_of, xhat, j_of, T, T_phi)


def _slice_level(k: int, d: int):
    """Points v with v_1 = 0, v >= 0 and |v| = k, lexicographic."""
    if d == 2:
        yield (0, k)
        return
    for head in range(k, -1, -1):
        for rest in _compositions(k - head, d - 2):
            yield (0, head) + rest


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


# ---------------------------------------------------------------- reflection


@dataclass(frozen=True)
class ReflectionSpec:
    """Geometry of the reflection coupling for a start ``a`` with a_1 = 0.

    ``b = a + floor(a_2 / 2)(e_1 - e_2)`` is the mirror image of ``a`` in
    ``plane`` (x_2 = x_1 + ceil(a_2 / 2)); ``q`` is where a path from ``a``
    first meets the plane. ``lo`` is the corner of the box on which the
    exchange R <-> R' is carried out exactly.
    """

    a: LatticePoint
    N: int
    q: LatticePoint

    def __post_init__(self):
        a = as_point(self.a)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "q", as_point(self.q))
        if a.dim < 2 or a[0] != 0 or a[1] < 2:
            raise ValueError("a must satisfy a_1 = 0 and a_2 >= 2")
        if any(c < 0 or c > self.N for c in a):
            raise ValueError("a must lie in [0, N u]")
        if not self.plane.contains(self.q):
            raise ValueError(f"q = {tuple(self.q)} is not on the plane")

    @property
    def k(self) -> int:
        return (self.a[1] + 1) // 2

    @property
    def plane(self) -> HyperplaneL:
        return HyperplaneL(self.k)

    @property
    def b(self) -> LatticePoint:
        h = self.a[1] // 2
        return LatticePoint((self.a[0] + h, self.a[1] - h) + tuple(self.a[2:]))

    @property
    def target(self) -> LatticePoint:
        return LatticePoint((self.N,) * self.a.dim)

    @property
    def lo(self) -> LatticePoint:
        return LatticePoint((0, self.k) + tuple(self.a[2:]))

    @property
    def R(self) -> ReflectHalf:
        return ReflectHalf(self.plane, self.q, True)

    @property
    def R_prime(self) -> ReflectHalf:
        return ReflectHalf(self.plane, self.q, False)

    def region_points(self) -> np.ndarray:
        """Points of R inside the box [lo, q]."""
        if not all(x <= y for x, y in zip(self.lo, self.q)):
            return np.zeros((0, self.a.dim), dtype=np.int64)
        pts = box_points(self.lo, self.q)
        return pts[pts[:, 1] - pts[:, 0] > self.k]

    def to_dict(self) -> dict:
        R = self.region_points()
        return {"a": list(self.a), "b": list(self.b), "N": self.N, "plane_offset": self.k,
                "q": list(self.q), "lo": list(self.lo), "region_size": int(R.shape[0])}


def crossing_point(path_vertices: np.ndarray, start, plane: HyperplaneL) -> LatticePoint:
    """First vertex of the path (start included) lying on the plane."""
    if plane.contains(start):
        return as_point(start)
    for v in path_vertices:
        if plane.contains(v):
            return LatticePoint(v)
    raise ValueError("path never meets the plane")


def reflection_spec(fld, a, N: int) -> tuple[ReflectionSpec, object]:
    """Spec with q read off the realized geodesic a -> N u; returns (spec, grid from a)."""
    a = as_point(a)
    target = LatticePoint((N,) * a.dim)
    grid = passage_grid(fld, a, target)
    path = grid.path_to(target)
    k = (a[1] + 1) // 2
    q = crossing_point(path.vertex_array(), a, HyperplaneL(k))
    return ReflectionSpec(a, N, q), grid


def reflect_configuration(fld: WeightField, spec: ReflectionSpec) -> WeightField:
    """Exchange the weights of R and R' across the plane; an involution."""
    R = spec.region_points()
    if fld.bounds is not None:
        lo, hi = fld.bounds
        if R.size and ((R < np.asarray(lo)).any() or (R > np.asarray(hi)).any()):
            raise BoxError("reflection region leaves the field bounds")
    if not R.size:
        return fld.with_overrides({})
    Rp = reflect_points(R, spec.plane)
    wr = fld.at(R)
    wp = fld.at(Rp)
    swap = {tuple(p): v for p, v in zip(R.tolist(), wp.tolist())}
    swap.update({tuple(p): v for p, v in zip(Rp.tolist(), wr.tolist())})
    return fld.with_overrides(swap)


@dataclass
class ReflectionCheck:
    spec: ReflectionSpec
    T_a: float
    T_b_reflected: float
    involution_ok: bool
    multiset_ok: bool

    @property
    def holds(self) -> bool:
        return self.T_b_reflected >= self.T_a


def check_reflection(fld: WeightField, a, N: int) -> ReflectionCheck:
    spec, grid = reflection_spec(fld, a, N)
    target = spec.target
    T_a = grid.value(target)
    refl = reflect_configuration(fld, spec)
    T_b = passage_grid(refl, spec.b, target).value(target)
    lo = LatticePoint(np.minimum(spec.b, spec.lo))
    w0 = fld.box(lo, target)
    w1 = refl.box(lo, target)
    w2 = reflect_configuration(refl, spec).box(lo, target)
    involution = bool(np.array_equal(w0, w2))
    multiset = bool(np.array_equal(np.sort(w0, axis=None), np.sort(w1, axis=None)))
    return ReflectionCheck(spec, T_a, T_b, involution, multiset)


@dataclass
class GapSample:
    D1: float
    D2: float


def _key(seed, experiment_id, i):
    return np.array([kernels.stream_key(seed, experiment_id, i, WEIGHT_STREAM)], dtype=np.uint64)


def reflection_gap_samples(spec: DistributionSpec, a, N: int, n: int, seed: int,
                           experiment_id: int = 0, ground_state: bool = False,
                           start: int = 0) -> list[GapSample]:
    """Gap variables on independent fields (sample indices start .. start+n-1).

    D1 = T(a, target) - T(b, target) where the target is N u, or with
    ``ground_state`` the whole level set at |x| = |N u|. D2 = T(-e1, a) - T(-e1, b).
    """
    a = as_point(a)
    d = a.dim
    h = a[1] // 2
    b = LatticePoint((a[0] + h, a[1] - h) + tuple(a[2:]))
    if a[0] != 0 or any(c < 0 or c > N for c in a):
        raise ValueError("a must satisfy a_1 = 0 and 0 <= a <= N u")
    code, params = spec.code, spec.kernel_params()
    m1 = np.array((-1,) + (0,) * (d - 1), dtype=np.int64)
    out = []
    total = N * d
    for i in range(start, start + n):
        keys = _key(seed, experiment_id, i)
        if ground_state:
            span = total - sum(a)
            shape = np.full(d, span + 1, dtype=np.int64)
            ta = kernels.ordered_batch(code, params, keys, np.asarray(a, np.int64), shape, span)[0]
            tb = kernels.ordered_batch(code, params, keys, np.asarray(b, np.int64), shape, span)[0]
        else:
            ta = kernels.ordered_batch(code, params, keys, np.asarray(a, np.int64),
                                       N - np.asarray(a, np.int64) + 1, -1)[0]
            tb = kernels.ordered_batch(code, params, keys, np.asarray(b, np.int64),
                                       N - np.asarray(b, np.int64) + 1, -1)[0]
        sa = kernels.ordered_batch(code, params, keys, m1, np.asarray(a, np.int64) - m1 + 1, -1)[0]
        sb = kernels.ordered_batch(code, params, keys, m1, np.asarray(b, np.int64) - m1 + 1, -1)[0]
        out.append(GapSample(float(ta - tb), float(sa - sb)))
    return out

