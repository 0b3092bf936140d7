"""Geometry of the two directed lattices.

``ORDERED`` is Z^d with steps +e_i. ``SPACETIME`` is Z^d read as d-1 space
coordinates plus time (last coordinate); every step moves one space
coordinate by +-1 and time by +1.

Direction indices are 0-based. On ``ORDERED`` index ``j`` is ``e_{j+1}``;
on ``SPACETIME`` index ``2i`` is ``+e_{i+1} + e_d`` and ``2i + 1`` is
``-e_{i+1} + e_d``.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DimensionMismatch, LimitExceeded, Unreachable

INT64_MAX = (1 << 63) - 1
COORD_LIMIT = 1 << 31


class LatticePoint(tuple):
    """Integer point of Z^d; a tuple with a few lattice helpers."""

    __slots__ = ()

    def __new__(cls, coords: Iterable[int]):
        coords = tuple(int(c) for c in coords)
        if not coords:
            raise ValueError("a lattice point needs at least one coordinate")
        return super().__new__(cls, coords)

    @property
    def dim(self) -> int:
        return len(self)

    @property
    def norm1(self) -> int:
        return sum(abs(c) for c in self)

    def __add__(self, other):
        _same_dim(self, other)
        return LatticePoint(a + b for a, b in zip(self, other))

    def __sub__(self, other):
        _same_dim(self, other)
        return LatticePoint(a - b for a, b in zip(self, other))

    def scale(self, k: int) -> "LatticePoint":
        return LatticePoint(k * c for c in self)

    def __repr__(self):
        return f"LatticePoint({tuple(self)})"


def as_point(x) -> LatticePoint:
    return x if isinstance(x, LatticePoint) else LatticePoint(x)


def origin(d: int) -> LatticePoint:
    return LatticePoint((0,) * d)


def unit(d: int, i: int) -> LatticePoint:
    """Basis vector e_{i+1} (0-based ``i``)."""
    return LatticePoint(1 if k == i else 0 for k in range(d))


def diagonal(d: int, n: int = 1) -> LatticePoint:
    return LatticePoint((n,) * d)


def _same_dim(x, y):
    if len(x) != len(y):
        raise DimensionMismatch(f"dimension mismatch: {len(x)} vs {len(y)}")


class GraphKind(enum.Enum):
    ORDERED = "ordered"
    SPACETIME = "spacetime"


def steps(kind: GraphKind, d: int) -> np.ndarray:
    """Step vectors indexed by direction index, shape (n_dirs, d)."""
    if kind is GraphKind.ORDERED:
        return np.eye(d, dtype=np.int64)
    if d < 2:
        raise ValueError("the space-time lattice needs d >= 2")
    out = np.zeros((2 * (d - 1), d), dtype=np.int64)
    for i in range(d - 1):
        out[2 * i, i] = 1
        out[2 * i + 1, i] = -1
    out[:, d - 1] = 1
    return out


@dataclass(frozen=True)
class PathSpec:
    """A directed path stored as direction indices from ``start``.

    The start vertex is not part of the path's vertex set.
    """

    start: LatticePoint
    steps: tuple
    kind: GraphKind = GraphKind.ORDERED

    def __post_init__(self):
        object.__setattr__(self, "start", as_point(self.start))
        object.__setattr__(self, "steps", tuple(int(s) for s in self.steps))
        n_dirs = len(steps(self.kind, self.start.dim))
        bad = [s for s in self.steps if not 0 <= s < n_dirs]
        if bad:
            raise ValueError(f"invalid direction indices {bad} for {self.kind.value}")

    def __len__(self):
        return len(self.steps)

    def vertex_array(self) -> np.ndarray:
        """Visited vertices (start excluded), shape (len, d)."""
        st = steps(self.kind, self.start.dim)
        if not self.steps:
            return np.zeros((0, self.start.dim), dtype=np.int64)
        return np.asarray(self.start, dtype=np.int64) + np.cumsum(st[list(self.steps)], axis=0)

    def vertices(self) -> Iterator[LatticePoint]:
        for row in self.vertex_array():
            yield LatticePoint(row)

    @property
    def end(self) -> LatticePoint:
        if not self.steps:
            return self.start
        return LatticePoint(self.vertex_array()[-1])


def leq(x: Sequence[int], y: Sequence[int]) -> bool:
    """Coordinate-wise order; true iff an ORDERED path x -> y exists."""
    _same_dim(x, y)
    return all(a <= b for a, b in zip(x, y))


def _spacetime_reachable(x, y) -> bool:
    n = y[-1] - x[-1]
    if n < 0:
        return False
    l1 = sum(abs(b - a) for a, b in zip(x[:-1], y[:-1]))
    return l1 <= n and (n - l1) % 2 == 0


def reachable(x, y, kind: GraphKind = GraphKind.ORDERED) -> bool:
    _same_dim(x, y)
    if kind is GraphKind.ORDERED:
        return leq(x, y)
    return _spacetime_reachable(x, y)


def path_count(x, y, kind: GraphKind = GraphKind.ORDERED) -> int:
    """Number of directed paths x -> y (0 when unreachable).

    Raises OverflowError past the signed 64-bit range.
    """
    _same_dim(x, y)
    if not reachable(x, y, kind):
        return 0
    if kind is GraphKind.ORDERED:
        diffs = [b - a for a, b in zip(x, y)]
        count = math.factorial(sum(diffs))
        for k in diffs:
            count //= math.factorial(k)
    else:
        count = _spacetime_count(x, y)
    if count > INT64_MAX:
        raise OverflowError(f"path count {count} exceeds the 64-bit range")
    return count


def _spacetime_count(x, y) -> int:
    # exact integer DP over the reachable window
    n = y[-1] - x[-1]
    counts = {tuple(x[:-1]): 1}
    for _ in range(n):
        nxt: dict = {}
        for s, c in counts.items():
            for i in range(len(s)):
                for sgn in (1, -1):
                    t = s[:i] + (s[i] + sgn,) + s[i + 1:]
                    nxt[t] = nxt.get(t, 0) + c
        counts = nxt
    return counts.get(tuple(y[:-1]), 0)


def step_sequences(x, y, limit: int, kind: GraphKind = GraphKind.ORDERED) -> np.ndarray:
    """Direction-index sequences of all paths x -> y as an int array (paths, length)."""
    x, y = as_point(x), as_point(y)
    count = path_count(x, y, kind)
    if count > limit:
        raise LimitExceeded(f"{count} paths from {tuple(x)} to {tuple(y)} exceed limit {limit}")
    if count == 0:
        raise Unreachable(f"{tuple(y)} is not reachable from {tuple(x)} on {kind.value}")
    st = steps(kind, x.dim)
    n = (sum(y) - sum(x)) if kind is GraphKind.ORDERED else y[-1] - x[-1]
    seqs = np.zeros((1, 0), dtype=np.int64)
    rem = (np.asarray(y, dtype=np.int64) - np.asarray(x, dtype=np.int64))[None, :]
    for t in range(n):
        left = n - t - 1
        new_seqs, new_rem = [], []
        for j, s in enumerate(st):
            r = rem - s
            if kind is GraphKind.ORDERED:
                ok = (r >= 0).all(axis=1)
            else:
                ok = np.abs(r[:, :-1]).sum(axis=1) <= left
            new_seqs.append(np.concatenate([seqs[ok], np.full((ok.sum(), 1), j)], axis=1))
            new_rem.append(r[ok])
        seqs = np.concatenate(new_seqs)
        rem = np.concatenate(new_rem)
        order = np.lexsort(seqs.T[::-1])
        seqs, rem = seqs[order], rem[order]
    return seqs


def enumerate_paths(x, y, limit: int, kind: GraphKind = GraphKind.ORDERED) -> list[PathSpec]:
    """All directed paths x -> y, refusing when there are more than ``limit``."""
    x = as_point(x)
    return [PathSpec(x, tuple(row), kind) for row in step_sequences(x, y, limit, kind).tolist()]


def level_set(N: int, kind: GraphKind, d: int) -> list[LatticePoint]:
    """Endpoints of N-step paths from the origin, lexicographically sorted.

    ORDERED: {x >= 0 : |x| = N}. SPACETIME: {(s, N) : |s| <= N, |s| = N mod 2}.
    """
    if N < 0:
        raise ValueError("N must be nonnegative")
    if kind is GraphKind.ORDERED:
        pts = [LatticePoint(c + (N - sum(c),))
               for c in itertools.product(range(N + 1), repeat=d - 1) if sum(c) <= N]
    else:
        pts = [LatticePoint(s + (N,))
               for s in itertools.product(range(-N, N + 1), repeat=d - 1)
               if sum(abs(c) for c in s) <= N and (N - sum(abs(c) for c in s)) % 2 == 0]
    return sorted(pts)


def embed_matrix(d: int) -> np.ndarray:
    """Columns are the images of e_1..e_d: e_i + e_d (i < d) and -e_1 + e_d."""
    if d < 2:
        raise ValueError("embedding needs d >= 2")
    M = np.zeros((d, d), dtype=np.int64)
    for i in range(d - 1):
        M[i, i] = 1
    M[0, d - 1] = -1
    M[d - 1, :] = 1
    return M


def embed_point(x) -> LatticePoint:
    x = as_point(x)
    return LatticePoint(embed_matrix(x.dim) @ np.asarray(x, dtype=np.int64))


def embed_points(pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.int64)
    return pts @ embed_matrix(pts.shape[-1]).T


def unembed_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Preimages under the embedding, plus a mask of points that have one."""
    y = np.asarray(pts, dtype=np.int64)
    r = y[..., -1] - y[..., 1:-1].sum(axis=-1)
    s = y[..., 0] + r
    ok = s % 2 == 0
    x = np.zeros_like(y)
    x[..., 0] = s // 2
    x[..., 1:-1] = y[..., 1:-1]
    x[..., -1] = (r - y[..., 0]) // 2
    return x, ok


def embed_step(j: int, d: int) -> int:
    """SPACETIME direction index of the embedded ORDERED step ``j``."""
    return 2 * j if j < d - 1 else 1


def embed_path(path: PathSpec) -> PathSpec:
    if path.kind is not GraphKind.ORDERED:
        raise ValueError("only ORDERED paths embed")
    d = path.start.dim
    return PathSpec(embed_point(path.start), tuple(embed_step(j, d) for j in path.steps),
                    GraphKind.SPACETIME)


def cone_contains(x) -> bool:
    """Space-time cone: x_d >= |x_1| + ... + |x_{d-1}|."""
    return x[-1] >= sum(abs(c) for c in x[:-1])


@dataclass(frozen=True)
class HyperplaneL:
    """The hyperplane x_2 = x_1 + offset."""

    offset: int

    def contains(self, x) -> bool:
        return x[1] == x[0] + self.offset

    def side(self, x) -> int:
        """+1 beyond the plane (x_2 - x_1 > offset), -1 before it, 0 on it."""
        diff = x[1] - x[0] - self.offset
        return (diff > 0) - (diff < 0)


@dataclass(frozen=True)
class Cone:
    def contains(self, x) -> bool:
        return cone_contains(x)


@dataclass(frozen=True)
class ReflectHalf:
    """Points below ``apex`` strictly on one side of ``plane``.

    ``far=True`` is the side away from the origin (x_2 - x_1 > offset), the
    region R; ``far=False`` is its mirror image R'.
    """

    plane: HyperplaneL
    apex: LatticePoint
    far: bool = True

    def contains(self, x) -> bool:
        return leq(x, self.apex) and self.plane.side(x) == (1 if self.far else -1)


def reflect_point(x, L: HyperplaneL) -> LatticePoint:
    """Mirror image in x_2 = x_1 + k: (x_1, x_2, rest) -> (x_2 - k, x_1 + k, rest)."""
    x = as_point(x)
    if x.dim < 2:
        raise DimensionMismatch("reflection needs d >= 2")
    return LatticePoint((x[1] - L.offset, x[0] + L.offset) + tuple(x[2:]))


def reflect_points(pts: np.ndarray, L: HyperplaneL) -> np.ndarray:
    pts = np.array(pts, dtype=np.int64, copy=True)
    a = pts[..., 0].copy()
    pts[..., 0] = pts[..., 1] - L.offset
    pts[..., 1] = a + L.offset
    return pts


def check_coords(x) -> None:
    if any(abs(c) >= COORD_LIMIT for c in x):
        raise ValueError(f"coordinates of {tuple(x)} exceed the +-2^31 box")
