"""Max-plus dynamic program: passage times, grids, geodesics, ground states."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import kernels
from .errors import BoxError, DimensionMismatch, Unreachable
from .lattice import (
    GraphKind,
    LatticePoint,
    PathSpec,
    as_point,
    embed_point,
    embed_step,
    reachable,
    step_sequences,
    steps,
    unembed_points,
)
from .randomness import DistributionSpec, SeedContext

MAX_CELLS = 1 << 28
NO_PRED = 255
TRANSPORT_STREAM = 0x7F


def _box_shape(lo, hi) -> np.ndarray:
    shape = np.asarray(hi, dtype=np.int64) - np.asarray(lo, dtype=np.int64) + 1
    if (shape <= 0).any():
        raise BoxError(f"empty box [{tuple(lo)}, {tuple(hi)}]")
    if float(np.prod(shape.astype(np.float64))) > MAX_CELLS:
        raise BoxError(f"box [{tuple(lo)}, {tuple(hi)}] exceeds {MAX_CELLS} cells")
    return shape


def box_points(lo, hi) -> np.ndarray:
    """All points of the box in C order, shape (cells, d)."""
    shape = _box_shape(lo, hi)
    grids = np.indices(tuple(shape)).reshape(len(shape), -1).T
    return grids + np.asarray(lo, dtype=np.int64)


class WeightField:
    """Seeded i.i.d. weights with optional sparse overrides.

    ``bounds`` (a ``(lo, hi)`` pair) restricts where the field may be read.
    The field is immutable; ``with_overrides`` returns a new one.
    """

    def __init__(self, spec: DistributionSpec, ctx: SeedContext,
                 overrides: Mapping | None = None, bounds=None):
        self.spec = spec
        self.ctx = ctx
        self._over = {tuple(int(c) for c in k): float(v) for k, v in (overrides or {}).items()}
        self.bounds = None if bounds is None else (as_point(bounds[0]), as_point(bounds[1]))
        self._key = np.uint64(ctx.key)
        self._params = spec.kernel_params()
        self._arrays = None

    @property
    def overrides(self) -> dict:
        return dict(self._over)

    def with_overrides(self, extra: Mapping) -> "WeightField":
        merged = dict(self._over)
        merged.update({tuple(int(c) for c in k): float(v) for k, v in extra.items()})
        return WeightField(self.spec, self.ctx, merged, self.bounds)

    def _override_arrays(self):
        if self._arrays is None:
            if self._over:
                pts = np.array(list(self._over), dtype=np.int64)
                vals = np.array(list(self._over.values()))
            else:
                pts, vals = np.zeros((0, 0), np.int64), np.zeros(0)
            self._arrays = (pts, vals)
        return self._arrays

    def _check(self, lo, hi):
        if self.bounds is None:
            return
        blo, bhi = self.bounds
        if len(lo) != len(blo):
            raise DimensionMismatch("query dimension differs from field bounds")
        if any(a < b for a, b in zip(lo, blo)) or any(a > b for a, b in zip(hi, bhi)):
            raise BoxError(f"[{tuple(lo)}, {tuple(hi)}] leaves field bounds {self.bounds}")

    def base_at(self, points) -> np.ndarray:
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=np.int64)))
        return kernels.weights_at(self.spec.code, self._params, self._key, pts)

    def at(self, points) -> np.ndarray:
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=np.int64)))
        if pts.size:
            self._check(pts.min(axis=0), pts.max(axis=0))
        out = kernels.weights_at(self.spec.code, self._params, self._key, pts)
        if self._over:
            for i, p in enumerate(map(tuple, pts.tolist())):
                v = self._over.get(p)
                if v is not None:
                    out[i] = v
        return out

    def weight(self, point) -> float:
        return float(self.at([tuple(point)])[0])

    def box(self, lo, hi) -> np.ndarray:
        """Weights on [lo, hi] as an array of shape hi - lo + 1."""
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        shape = _box_shape(lo, hi)
        self._check(lo, hi)
        w = kernels.fill_box(self.spec.code, self._params, self._key, lo, shape).reshape(tuple(shape))
        pts, vals = self._override_arrays()
        if vals.size:
            rel = pts - lo
            inside = ((rel >= 0) & (rel < shape)).all(axis=1)
            if inside.any():
                w[tuple(rel[inside].T)] = vals[inside]
        return w

    @property
    def plain(self) -> bool:
        """True when the field is the raw seeded environment (fused kernels apply)."""
        return not self._over and self.bounds is None

    def __repr__(self):
        return (f"WeightField({self.spec}, seed={self.ctx.master_seed}, "
                f"sample={self.ctx.sample_index}, overrides={len(self._over)})")


class TransportedField:
    """Space-time weights carried over from an ordered field by the embedding.

    The image of v receives the weight of v; points outside the image get
    fresh draws from a separate stream of the same law.
    """

    def __init__(self, base: WeightField):
        self.base = base
        self.aux = WeightField(base.spec, base.ctx.substream(TRANSPORT_STREAM))
        self.spec = base.spec

    def at(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.int64))
        pre, ok = unembed_points(pts)
        out = np.empty(pts.shape[0])
        if ok.any():
            out[ok] = self.base.at(pre[ok])
        if (~ok).any():
            out[~ok] = self.aux.at(pts[~ok])
        return out

    def weight(self, point) -> float:
        return float(self.at([tuple(point)])[0])

    def box(self, lo, hi) -> np.ndarray:
        shape = _box_shape(lo, hi)
        return self.at(box_points(lo, hi)).reshape(tuple(shape))


def _field_box(fld, lo, hi) -> np.ndarray:
    return fld.box(lo, hi)


@dataclass
class PassageGrid:
    """T(origin, v) for every v of the box [lo, lo + shape - 1].

    ``values`` and ``back`` are indexed by ``v - lo``. Unreachable cells hold
    -inf and back-pointer 255; otherwise ``back`` is the direction index of
    the last step of the canonical maximizing path.
    """

    origin: LatticePoint
    kind: GraphKind
    lo: LatticePoint
    values: np.ndarray
    back: np.ndarray

    @property
    def hi(self) -> LatticePoint:
        return LatticePoint(np.asarray(self.lo) + np.asarray(self.values.shape) - 1)

    def contains(self, v) -> bool:
        rel = np.asarray(v) - np.asarray(self.lo)
        return bool(((rel >= 0) & (rel < self.values.shape)).all())

    def _rel(self, v) -> tuple:
        v = as_point(v)
        if v.dim != self.origin.dim:
            raise DimensionMismatch("point dimension differs from grid")
        if not self.contains(v):
            raise BoxError(f"{tuple(v)} is outside the grid box [{tuple(self.lo)}, {tuple(self.hi)}]")
        return tuple(np.asarray(v) - np.asarray(self.lo))

    def value(self, v) -> float:
        val = float(self.values[self._rel(v)])
        if val == -np.inf:
            raise Unreachable(f"{tuple(v)} is not reachable from {tuple(self.origin)}")
        return val

    def path_to(self, v) -> PathSpec:
        v = as_point(v)
        self.value(v)
        shape = self.values.shape
        end = int(np.ravel_multi_index(self._rel(v), shape))
        start = int(np.ravel_multi_index(self._rel(self.origin), shape))
        seq = kernels.backtrack(self.back.reshape(-1), self.deltas(), end, start,
                                path_length(self.origin, v, self.kind))
        return PathSpec(self.origin, tuple(seq.tolist()), self.kind)

    def deltas(self) -> np.ndarray:
        """Flat-index offset of each direction."""
        strides = np.asarray(self.values.strides) // self.values.itemsize
        return steps(self.kind, self.origin.dim) @ strides

    def geodesic_to(self, v) -> "Geodesic":
        return Geodesic(self.path_to(v), self.value(v))

    def level_values(self, N: int) -> tuple[np.ndarray, np.ndarray]:
        """Points at N steps from the origin inside the box, and their values."""
        pts = box_points(self.lo, self.hi)
        if self.kind is GraphKind.ORDERED:
            mask = (pts - np.asarray(self.origin)).sum(axis=1) == N
        else:
            mask = pts[:, -1] - self.origin[-1] == N
        vals = self.values.reshape(-1)[mask]
        keep = vals > -np.inf
        return pts[mask][keep], vals[keep]

    def to_csv(self) -> str:
        """One row per reachable cell: coordinates, T value, back-pointer."""
        buf = io.StringIO()
        d = self.origin.dim
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(d)] + ["T", "back"])
        pts = box_points(self.lo, self.hi)
        vals = self.values.reshape(-1)
        back = self.back.reshape(-1)
        for p, t, b in zip(pts.tolist(), vals.tolist(), back.tolist()):
            if t > -np.inf:
                w.writerow(p + [f"{t:.12g}", "" if b == NO_PRED else b])
        return buf.getvalue()


@dataclass
class Geodesic:
    path: PathSpec
    value: float

    def vertices(self) -> np.ndarray:
        return self.path.vertex_array()

    def to_csv(self, fld=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.path.start.dim
        w.writerow(["step"] + [f"x{i + 1}" for i in range(d)] + ["direction"]
                   + (["weight"] if fld is not None else []))
        verts = self.vertices()
        ws = fld.at(verts) if fld is not None and len(verts) else []
        for k, (v, j) in enumerate(zip(verts.tolist(), self.path.steps)):
            row = [k + 1] + v + [j]
            if fld is not None:
                row.append(f"{ws[k]:.12g}")
            w.writerow(row)
        return buf.getvalue()


def _resolve_box(origin: LatticePoint, box, kind: GraphKind):
    """Turn the ``box`` argument into (lo, hi)."""
    d = origin.dim
    if kind is GraphKind.ORDERED:
        if isinstance(box, tuple) and len(box) == 2 and not np.isscalar(box[0]):
            lo, hi = as_point(box[0]), as_point(box[1])
            if tuple(lo) != tuple(origin):
                raise BoxError("ordered grids start at their origin")
        else:
            hi = as_point(box)
        if hi.dim != d:
            raise DimensionMismatch("box corner dimension differs from origin")
        if not reachable(origin, hi, kind):
            raise Unreachable(f"{tuple(hi)} is not above {tuple(origin)}")
        return origin, hi
    if d < 2:
        raise DimensionMismatch("space-time grids need d >= 2")
    if np.isscalar(box):
        n = int(box)
        if n < 0:
            raise BoxError("number of time steps must be nonnegative")
        lo = LatticePoint([c - n for c in origin[:-1]] + [origin[-1]])
        hi = LatticePoint([c + n for c in origin[:-1]] + [origin[-1] + n])
        return lo, hi
    lo, hi = as_point(box[0]), as_point(box[1])
    if lo[-1] != origin[-1]:
        raise BoxError("space-time grids start at the origin's time slice")
    if not all(a <= c <= b for a, c, b in zip(lo, origin, hi)):
        raise BoxError("origin must lie inside the box")
    return lo, hi


def passage_grid(fld, origin, box, kind: GraphKind = GraphKind.ORDERED,
                 allowed: tuple | None = None) -> PassageGrid:
    """Single level-order sweep of T(origin, .) over a box.

    ORDERED: ``box`` is the far corner (or ``(origin, far)``). SPACETIME:
    ``box`` is a number of time steps (full cone hull) or an explicit
    ``(lo, hi)`` pair whose time range starts at the origin. ``allowed``
    restricts SPACETIME sweeps to a subset of direction indices.
    """
    origin = as_point(origin)
    lo, hi = _resolve_box(origin, box, kind)
    w = _field_box(fld, lo, hi)
    shape = np.asarray(w.shape, dtype=np.int64)
    if kind is GraphKind.ORDERED:
        if allowed is not None:
            raise ValueError("direction restriction is only supported on SPACETIME")
        T, back = kernels.ordered_dp(np.ascontiguousarray(w.reshape(-1)), shape)
        return PassageGrid(origin, kind, lo, T.reshape(w.shape), back.reshape(w.shape))
    d = origin.dim
    sshape = shape[:-1]
    nt = int(shape[-1])
    all_moves = steps(kind, d)[:, :-1]
    idx = list(range(len(all_moves))) if allowed is None else sorted(allowed)
    moves = np.ascontiguousarray(all_moves[idx])
    w2 = np.ascontiguousarray(np.moveaxis(w, -1, 0).reshape(nt, -1))
    start = int(np.ravel_multi_index(tuple(np.asarray(origin[:-1]) - np.asarray(lo[:-1])), tuple(sshape)))
    T, back = kernels.spacetime_dp(w2, sshape, moves, start)
    T = np.moveaxis(T.reshape((nt,) + tuple(sshape)), 0, -1)
    back = np.moveaxis(back.reshape((nt,) + tuple(sshape)), 0, -1)
    if allowed is not None:
        table = np.full(256, NO_PRED, dtype=np.uint8)
        table[:len(idx)] = idx
        back = table[back]
    return PassageGrid(origin, kind, lo, np.ascontiguousarray(T), np.ascontiguousarray(back))


def path_length(x, y, kind: GraphKind) -> int:
    if kind is GraphKind.ORDERED:
        return int(sum(y) - sum(x))
    return int(y[-1] - x[-1])


def _minimal_box(x: LatticePoint, y: LatticePoint, kind: GraphKind):
    if kind is GraphKind.ORDERED:
        return y
    n = y[-1] - x[-1]
    lo = [max(a, b) - n for a, b in zip(x[:-1], y[:-1])] + [x[-1]]
    hi = [min(a, b) + n for a, b in zip(x[:-1], y[:-1])] + [y[-1]]
    return LatticePoint(lo), LatticePoint(hi)


def _check_pair(x, y, kind):
    x, y = as_point(x), as_point(y)
    if x.dim != y.dim:
        raise DimensionMismatch(f"dimension mismatch: {x.dim} vs {y.dim}")
    if not reachable(x, y, kind):
        raise Unreachable(f"{tuple(y)} is not reachable from {tuple(x)} on {kind.value}")
    return x, y


def last_passage_time(fld, x, y, kind: GraphKind = GraphKind.ORDERED) -> float:
    """Maximal weight of a directed path x -> y, start vertex excluded."""
    x, y = _check_pair(x, y, kind)
    if kind is GraphKind.ORDERED and isinstance(fld, WeightField) and fld.plain:
        # fused sweep, memory of one slab
        shape = np.asarray(y, dtype=np.int64) - np.asarray(x, dtype=np.int64) + 1
        _box_shape(x, y)
        keys = np.array([fld.ctx.key], dtype=np.uint64)
        return float(kernels.ordered_batch(fld.spec.code, fld.spec.kernel_params(), keys,
                                           np.asarray(x, dtype=np.int64), shape, -1)[0])
    return passage_grid(fld, x, _minimal_box(x, y, kind), kind).value(y)


def geodesic(fld, x, y, kind: GraphKind = GraphKind.ORDERED) -> Geodesic:
    """Canonical maximizing path (smallest direction index when backtracking)."""
    x, y = _check_pair(x, y, kind)
    return passage_grid(fld, x, _minimal_box(x, y, kind), kind).geodesic_to(y)


def ground_state(fld, N: int, kind: GraphKind = GraphKind.ORDERED, start=None,
                 d: int | None = None) -> tuple[float, LatticePoint]:
    """max over the N-th level set of T(start, .) and its lexicographically largest argmax."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    if start is None:
        if d is None:
            raise ValueError("give either start or d")
        start = LatticePoint((0,) * d)
    start = as_point(start)
    if kind is GraphKind.ORDERED:
        grid = passage_grid(fld, start, start + LatticePoint((N,) * start.dim), kind)
    else:
        grid = passage_grid(fld, start, N, kind)
    pts, vals = grid.level_values(N)
    best = vals.max()
    ties = pts[vals == best]
    arg = max(map(tuple, ties.tolist()))
    return float(best), LatticePoint(arg)


def path_weight(fld, path: PathSpec) -> float:
    """Sequential sum of weights along the path, start excluded."""
    verts = path.vertex_array()
    if not len(verts):
        return 0.0
    return float(np.add.accumulate(fld.at(verts))[-1])


def brute_force_oracle(fld, x, y, kind: GraphKind = GraphKind.ORDERED, limit: int = 100_000) -> float:
    """Max of path weights over every enumerated path x -> y."""
    x, y = _check_pair(x, y, kind)
    seqs = step_sequences(x, y, limit, kind)
    if not seqs.shape[1]:
        return 0.0
    verts = np.asarray(x, dtype=np.int64) + np.cumsum(steps(kind, x.dim)[seqs], axis=1)
    flat = verts.reshape(-1, x.dim)
    uniq, inv = np.unique(flat, axis=0, return_inverse=True)
    ws = fld.at(uniq)[inv.reshape(-1)].reshape(verts.shape[:2])
    sums = np.add.accumulate(ws, axis=1)[:, -1]
    return float(sums.max())


@dataclass
class ShiftGrids:
    """T(-e1, .) and T(0, .) on one field over [-e1, x]."""

    from_minus: PassageGrid
    from_zero: PassageGrid
    target: LatticePoint = field(default=None)

    def h(self, v) -> float:
        return self.from_minus.value(v) - self.from_zero.value(v)

    def h_array(self) -> np.ndarray:
        """h on [0, x]; entries index v directly."""
        tm = self.from_minus.values[1:]
        return tm - self.from_zero.values


def shift_grids(fld, x) -> ShiftGrids:
    x = as_point(x)
    if not all(c >= 0 for c in x):
        raise Unreachable("shift differences need x >= 0")
    m = LatticePoint((-1,) + (0,) * (x.dim - 1))
    gm = passage_grid(fld, m, x, GraphKind.ORDERED)
    g0 = passage_grid(fld, LatticePoint((0,) * x.dim), x, GraphKind.ORDERED)
    return ShiftGrids(gm, g0, x)


def shift_difference(fld, x) -> float:
    """h(x) = T(-e1, x) - T(0, x) on one field."""
    x = as_point(x)
    if not all(c >= 0 for c in x):
        raise Unreachable("shift differences need x >= 0")
    m = LatticePoint((-1,) + (0,) * (x.dim - 1))
    return last_passage_time(fld, m, x) - last_passage_time(fld, LatticePoint((0,) * x.dim), x)


@dataclass
class EmbeddingComparison:
    """T(0, a) on an ordered field against the transported space-time field."""

    a: LatticePoint
    ordered: float
    restricted: float
    full: float

    @property
    def exact(self) -> bool:
        return self.ordered == self.restricted

    @property
    def dominated(self) -> bool:
        return self.full >= self.ordered


def embedding_comparison(fld: WeightField, a) -> EmbeddingComparison:
    """Passage times of a and its image; the restricted sweep uses embedded steps only."""
    a = as_point(a)
    d = a.dim
    tf = TransportedField(fld)
    ahat = embed_point(a)
    o = LatticePoint((0,) * d)
    allowed = tuple(embed_step(j, d) for j in range(d))
    restricted = passage_grid(tf, o, a.norm1, GraphKind.SPACETIME, allowed=allowed).value(ahat)
    full = passage_grid(tf, o, a.norm1, GraphKind.SPACETIME).value(ahat)
    return EmbeddingComparison(a, last_passage_time(fld, o, a), restricted, full)
