"""Vectorized numpy twins of the numba kernels (used when numba is disabled).

Sweeps run level by level (antidiagonals / time slices) and are batched over
a leading sample axis where that helps.
"""
import numpy as np

from . import _common as C

_GOLDEN = np.uint64(C.GOLDEN)
_MIX1 = np.uint64(C.MIX1)
_MIX2 = np.uint64(C.MIX2)
_CMUL = np.uint64(C.COORD_MUL)
_CADD = np.uint64(C.COORD_ADD)
_INV53 = 1.0 / 9007199254740992.0
_NO_PRED = np.uint8(255)
_CHUNK_CELLS = 1 << 22


def mix64(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def hash_coord(h, c):
    c = (np.asarray(c, dtype=np.int64) + C.COORD_BIAS).astype(np.uint64)
    with np.errstate(over="ignore"):
        return mix64(h ^ (c * _CMUL + _CADD))


def draw(h, j):
    with np.errstate(over="ignore"):
        return mix64(h + np.uint64(j + 1) * _GOLDEN)


def to_unit(z):
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * _INV53


def ndtri(p):
    p = np.asarray(p, dtype=np.float64)
    q = p - 0.5
    out = np.empty_like(p)
    central = np.abs(q) <= 0.425
    if central.any():
        qc = q[central]
        r = 0.180625 - qc * qc
        num = (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r
                    + 67265.770927008700853) * r + 45921.953931549871457) * r
                  + 13731.693765509461125) * r + 1971.5909503065514427) * r
                + 133.14166789178437745) * r + 3.387132872796366608)
        den = (((((((r * 5226.495278852545925 + 28729.085735721942674) * r
                    + 39307.89580009271061) * r + 21213.794301586595867) * r
                  + 5394.1960214247511077) * r + 687.1870074920579083) * r
                + 42.313330701600911252) * r + 1.0)
        out[central] = qc * num / den
    tail = ~central
    if tail.any():
        qt = q[tail]
        pt = p[tail]
        r = np.sqrt(-np.log(np.where(qt < 0.0, pt, 1.0 - pt)))
        val = np.empty_like(r)
        near = r <= 5.0
        rn = r[near] - 1.6
        num = (((((((rn * 7.7454501427834140764e-4 + 0.0227238449892691845833) * rn
                    + 0.24178072517745061177) * rn + 1.27045825245236838258) * rn
                  + 3.64784832476320460504) * rn + 5.7694972214606914055) * rn
                + 4.6303378461565452959) * rn + 1.42343711074968357734)
        den = (((((((rn * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * rn
                    + 0.0151986665636164571966) * rn + 0.14810397642748007459) * rn
                  + 0.68976733498510000455) * rn + 1.6763848301838038494) * rn
                + 2.05319162663775882187) * rn + 1.0)
        val[near] = num / den
        rf = r[~near] - 5.0
        num = (((((((rf * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * rf
                    + 0.0012426609473880784386) * rf + 0.026532189526576123093) * rf
                  + 0.29656057182850489123) * rf + 1.7848265399172913358) * rf
                + 5.4637849111641143699) * rf + 6.6579046435011037772)
        den = (((((((rf * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * rf
                    + 1.8463183175100546818e-5) * rf + 7.868691311456132591e-4) * rf
                  + 0.0148753612908506148525) * rf + 0.13692988092273580531) * rf
                + 0.59983220655588793769) * rf + 1.0)
        val[~near] = num / den
        out[tail] = np.where(qt < 0.0, -val, val)
    return out


def _gamma_draw(alpha, h, first):
    dd = alpha - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * dd)
    out = np.full(h.shape, dd)
    pending = np.arange(h.size)
    hf = h.ravel()
    j = first
    for _ in range(C.MAX_GAMMA_ROUNDS):
        if pending.size == 0:
            break
        hp = hf[pending]
        x = ndtri(to_unit(draw(hp, j)))
        u = to_unit(draw(hp, j + 1))
        j += 2
        v = 1.0 + c * x
        ok = v > 0.0
        v = np.where(ok, v, 1.0)
        v = v * v * v
        acc = ok & (np.log(u) < 0.5 * x * x + dd - dd * v + dd * np.log(v))
        out.ravel()[pending[acc]] = dd * v[acc]
        pending = pending[~acc]
    return out


def weight_from_hash(code, p0, p1, h):
    h = np.asarray(h, dtype=np.uint64)
    if code == C.POINTMASS:
        return np.full(h.shape, float(p0))
    u = to_unit(draw(h, 0))
    if code == C.GAUSSIAN:
        return ndtri(u)
    if code == C.UNIFORM:
        return u
    if code == C.GEOMETRIC:
        k = np.ceil(np.log(1.0 - u) * p1) - 1.0
        return np.maximum(k, 0.0)
    if code == C.BERNOULLI:
        return np.where(u > 1.0 - p0, 1.0, 0.0)
    if p0 >= 1.0:
        return _gamma_draw(p0, h, 1) / p1
    return _gamma_draw(p0 + 1.0, h, 1) * u ** (1.0 / p0) / p1


def point_hash(key, coords):
    coords = np.asarray(coords, dtype=np.int64)
    h = np.full(coords.shape[:-1], np.uint64(key), dtype=np.uint64)
    for k in range(coords.shape[-1]):
        h = hash_coord(h, coords[..., k])
    return h


def weights_at(code, params, key, points):
    points = np.asarray(points, dtype=np.int64)
    return weight_from_hash(code, params[0], params[1], point_hash(key, points))


def _box_hash(keys, lo, shape):
    # keys (B,) -> hashes (B, n) in C order over the box
    h = np.asarray(keys, dtype=np.uint64)[:, None]
    for k in range(len(shape)):
        c = lo[k] + np.arange(shape[k], dtype=np.int64)
        h = hash_coord(h[:, :, None], c[None, None, :]).reshape(h.shape[0], -1)
    return h


def fill_box(code, params, key, lo, shape):
    h = _box_hash(np.array([key], dtype=np.uint64), np.asarray(lo), np.asarray(shape))
    return weight_from_hash(code, params[0], params[1], h[0])


class _Levels:
    """Flat indices of a box grouped by L1 level, with predecessor offsets."""

    def __init__(self, shape):
        shape = tuple(int(s) for s in shape)
        self.shape = shape
        self.coords = np.indices(shape).reshape(len(shape), -1)
        lev = self.coords.sum(axis=0)
        self.level = lev
        self.order = np.argsort(lev, kind="stable")
        self.bounds = np.searchsorted(lev[self.order], np.arange(lev.max() + 2))
        st = np.ones(len(shape), dtype=np.int64)
        for k in range(len(shape) - 2, -1, -1):
            st[k] = st[k + 1] * shape[k + 1]
        self.strides = st


def _ordered_sweep(w2, levels, want_back):
    B, n = w2.shape
    d = len(levels.shape)
    T = np.empty_like(w2)
    T[:, 0] = 0.0
    back = np.full((B, n), _NO_PRED, np.uint8) if want_back else None
    for L in range(1, len(levels.bounds) - 1):
        ids = levels.order[levels.bounds[L]:levels.bounds[L + 1]]
        cand = np.full((d, B, ids.size), -np.inf)
        for j in range(d):
            ok = levels.coords[j, ids] > 0
            cand[j][:, ok] = T[:, ids[ok] - levels.strides[j]]
        T[:, ids] = w2[:, ids] + cand.max(axis=0)
        if want_back:
            back[:, ids] = cand.argmax(axis=0).astype(np.uint8)
    return T, back


def ordered_dp(w, shape):
    levels = _Levels(shape)
    T, back = _ordered_sweep(np.asarray(w, dtype=np.float64)[None, :], levels, True)
    return T[0], back[0]


def _shifted(prev, sshape, move):
    # out[s] = prev[s - move] inside the box, -inf elsewhere
    B = prev.shape[0]
    src = prev.reshape((B,) + tuple(sshape))
    out = np.full_like(src, -np.inf)
    dst_sl = [slice(None)]
    src_sl = [slice(None)]
    for k, m in enumerate(move):
        m = int(m)
        n = int(sshape[k])
        if m >= 0:
            dst_sl.append(slice(m, n))
            src_sl.append(slice(0, n - m))
        else:
            dst_sl.append(slice(0, n + m))
            src_sl.append(slice(-m, n))
    out[tuple(dst_sl)] = src[tuple(src_sl)]
    return out.reshape(B, -1)


def spacetime_dp(w, sshape, moves, start):
    w = np.asarray(w, dtype=np.float64)
    nt, S = w.shape
    T = np.full((nt, S), -np.inf)
    back = np.full((nt, S), _NO_PRED, np.uint8)
    T[0, start] = 0.0
    for t in range(1, nt):
        cand = np.stack([_shifted(T[t - 1][None, :], sshape, m)[0] for m in moves])
        best = cand.max(axis=0)
        ok = best > -np.inf
        T[t, ok] = w[t, ok] + best[ok]
        back[t, ok] = cand.argmax(axis=0)[ok].astype(np.uint8)
    return T, back


def ordered_batch(code, params, keys, lo, shape, level):
    keys = np.asarray(keys, dtype=np.uint64)
    lo = np.asarray(lo, dtype=np.int64)
    shape = np.asarray(shape, dtype=np.int64)
    levels = _Levels(shape)
    n = int(np.prod(shape))
    chunk = max(1, _CHUNK_CELLS // n)
    out = np.empty(keys.size)
    for a in range(0, keys.size, chunk):
        kb = keys[a:a + chunk]
        w2 = weight_from_hash(code, params[0], params[1], _box_hash(kb, lo, shape))
        T, _ = _ordered_sweep(w2, levels, False)
        if level >= 0:
            out[a:a + kb.size] = T[:, levels.level == level].max(axis=1)
        else:
            out[a:a + kb.size] = T[:, -1]
    return out


def spacetime_ground_batch(code, params, keys, N, d):
    keys = np.asarray(keys, dtype=np.uint64)
    if N == 0:
        return np.zeros(keys.size)
    ds = d - 1
    side = 2 * N + 1
    sshape = (side,) * ds
    grid = np.indices(sshape).reshape(ds, -1).T - N
    l1 = np.abs(grid).sum(axis=1)
    moves = []
    for k in range(ds):
        for sgn in (1, -1):
            m = np.zeros(ds, dtype=np.int64)
            m[k] = sgn
            moves.append(m)
    S = grid.shape[0]
    chunk = max(1, _CHUNK_CELLS // S)
    out = np.empty(keys.size)
    for a in range(0, keys.size, chunk):
        kb = keys[a:a + chunk]
        B = kb.size
        prev = np.full((B, S), -np.inf)
        prev[:, (S - 1) // 2] = 0.0
        for t in range(1, N + 1):
            live = np.flatnonzero((l1 <= t) & ((t - l1) % 2 == 0))
            pts = np.concatenate([grid[live], np.full((live.size, 1), t)], axis=1)
            h = kb[:, None]
            for k in range(d):
                h = hash_coord(h, pts[None, :, k])
            cur = np.full((B, S), -np.inf)
            best = np.max(np.stack([_shifted(prev, sshape, m) for m in moves]), axis=0)
            cur[:, live] = weight_from_hash(code, params[0], params[1], h) + best[:, live]
            prev = cur
        out[a:a + B] = prev.max(axis=1)
    return out


def backtrack(back, deltas, end, start, length):
    out = []
    pos = int(end)
    start = int(start)
    deltas = [int(v) for v in deltas]
    while pos != start and len(out) < length:
        j = int(back[pos])
        out.append(j)
        pos -= deltas[j]
    return np.array(out[::-1], dtype=np.int64)
