"""Loop kernels compiled with numba.

Every function here has a vectorized twin in ``_numpy`` with the same
signature; ``lppsim.kernels`` picks one of the two at import time.
"""
import math
import os

import numpy as np
from numba import config, njit, prange

# the bundled TBB is too old; avoid the warning unless the user picked a layer
if "NUMBA_THREADING_LAYER" not in os.environ:
    config.THREADING_LAYER = "workqueue"

from . import _common as C

_GOLDEN = np.uint64(C.GOLDEN)
_MIX1 = np.uint64(C.MIX1)
_MIX2 = np.uint64(C.MIX2)
_CMUL = np.uint64(C.COORD_MUL)
_CADD = np.uint64(C.COORD_ADD)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0
_NO_PRED = np.uint8(255)


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def hash_coord(h, c):
    return mix64(h ^ (np.uint64(c + C.COORD_BIAS) * _CMUL + _CADD))


@njit(cache=True, inline="always")
def draw(h, j):
    return mix64(h + np.uint64(j + 1) * _GOLDEN)


@njit(cache=True, inline="always")
def to_unit(z):
    return (float(z >> _S11) + 0.5) * _INV53


@njit(cache=True)
def ndtri(p):
    # Wichura's AS241 (PPND16); ~1e-16 relative accuracy on (0, 1)
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r
                    + 67265.770927008700853) * r + 45921.953931549871457) * r
                  + 13731.693765509461125) * r + 1971.5909503065514427) * r
                + 133.14166789178437745) * r + 3.387132872796366608)
        den = (((((((r * 5226.495278852545925 + 28729.085735721942674) * r
                    + 39307.89580009271061) * r + 21213.794301586595867) * r
                  + 5394.1960214247511077) * r + 687.1870074920579083) * r
                + 42.313330701600911252) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r
                    + 0.24178072517745061177) * r + 1.27045825245236838258) * r
                  + 3.64784832476320460504) * r + 5.7694972214606914055) * r
                + 4.6303378461565452959) * r + 1.42343711074968357734)
        den = (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r
                    + 0.0151986665636164571966) * r + 0.14810397642748007459) * r
                  + 0.68976733498510000455) * r + 1.6763848301838038494) * r
                + 2.05319162663775882187) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r
                    + 0.0012426609473880784386) * r + 0.026532189526576123093) * r
                  + 0.29656057182850489123) * r + 1.7848265399172913358) * r
                + 5.4637849111641143699) * r + 6.6579046435011037772)
        den = (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r
                    + 1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r
                  + 0.0148753612908506148525) * r + 0.13692988092273580531) * r
                + 0.59983220655588793769) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@njit(cache=True)
def _gamma_draw(alpha, h, first):
    # Marsaglia-Tsang; draw indices first, first+1, ... feed the rejection loop
    dd = alpha - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * dd)
    j = first
    for _ in range(C.MAX_GAMMA_ROUNDS):
        x = ndtri(to_unit(draw(h, j)))
        u = to_unit(draw(h, j + 1))
        j += 2
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        if math.log(u) < 0.5 * x * x + dd - dd * v + dd * math.log(v):
            return dd * v
    return dd


@njit(cache=True)
def weight_from_hash(code, p0, p1, h):
    if code == C.POINTMASS:
        return p0
    u = to_unit(draw(h, 0))
    if code == C.GAUSSIAN:
        return ndtri(u)
    if code == C.UNIFORM:
        return u
    if code == C.GEOMETRIC:
        # p1 carries 1 / log(q)
        k = math.ceil(math.log(1.0 - u) * p1) - 1.0
        return k if k > 0.0 else 0.0
    if code == C.BERNOULLI:
        return 1.0 if u > 1.0 - p0 else 0.0
    # gamma: shape p0, rate p1
    if p0 >= 1.0:
        return _gamma_draw(p0, h, 1) / p1
    return _gamma_draw(p0 + 1.0, h, 1) * u ** (1.0 / p0) / p1


@njit(cache=True)
def point_hash(key, coords):
    h = key
    for k in range(coords.size):
        h = hash_coord(h, coords[k])
    return h


@njit(cache=True)
def weights_at(code, params, key, points):
    m = points.shape[0]
    out = np.empty(m)
    for i in range(m):
        out[i] = weight_from_hash(code, params[0], params[1], point_hash(key, points[i]))
    return out


@njit(cache=True)
def _strides(shape):
    d = shape.size
    st = np.empty(d, np.int64)
    s = 1
    for k in range(d - 1, -1, -1):
        st[k] = s
        s *= shape[k]
    return st


@njit(cache=True)
def fill_box(code, params, key, lo, shape):
    d = shape.size
    n = 1
    for k in range(d):
        n *= shape[k]
    out = np.empty(n)
    idx = np.zeros(d, np.int64)
    hp = np.empty(d + 1, np.uint64)
    hp[0] = key
    for k in range(d):
        hp[k + 1] = hash_coord(hp[k], lo[k])
    for i in range(n):
        if i > 0:
            k = d - 1
            idx[k] += 1
            while idx[k] == shape[k]:
                idx[k] = 0
                k -= 1
                idx[k] += 1
            for kk in range(k, d):
                hp[kk + 1] = hash_coord(hp[kk], lo[kk] + idx[kk])
        out[i] = weight_from_hash(code, params[0], params[1], hp[d])
    return out


@njit(cache=True)
def ordered_dp(w, shape):
    """Max-plus sweep in C order; returns passage values and back-pointers."""
    d = shape.size
    n = w.size
    st = _strides(shape)
    T = np.empty(n)
    back = np.empty(n, np.uint8)
    idx = np.zeros(d, np.int64)
    T[0] = 0.0
    back[0] = _NO_PRED
    for i in range(1, n):
        k = d - 1
        idx[k] += 1
        while idx[k] == shape[k]:
            idx[k] = 0
            k -= 1
            idx[k] += 1
        best = -np.inf
        bj = 0
        for j in range(d):
            if idx[j] > 0:
                t = T[i - st[j]]
                if t > best:
                    best = t
                    bj = j
        T[i] = w[i] + best
        back[i] = bj
    return T, back


@njit(cache=True)
def spacetime_dp(w, sshape, moves, start):
    """Time-sliced sweep; ``w`` is (time, flat space), ``moves`` spatial steps."""
    nt, S = w.shape
    ds = sshape.size
    nm = moves.shape[0]
    st = _strides(sshape)
    T = np.full((nt, S), -np.inf)
    back = np.full((nt, S), _NO_PRED, np.uint8)
    T[0, start] = 0.0
    idx = np.zeros(ds, np.int64)
    for t in range(1, nt):
        for k in range(ds):
            idx[k] = 0
        for s in range(S):
            if s > 0:
                k = ds - 1
                idx[k] += 1
                while idx[k] == sshape[k]:
                    idx[k] = 0
                    k -= 1
                    idx[k] += 1
            best = -np.inf
            bj = 0
            for m in range(nm):
                src = s
                ok = True
                for k in range(ds):
                    c = idx[k] - moves[m, k]
                    if c < 0 or c >= sshape[k]:
                        ok = False
                        break
                    src -= moves[m, k] * st[k]
                if ok:
                    v = T[t - 1, src]
                    if v > best:
                        best = v
                        bj = m
            if best > -np.inf:
                T[t, s] = w[t, s] + best
                back[t, s] = bj
    return T, back


@njit(cache=True)
def _ordered_one(code, p0, p1, key, lo, shape, st, level):
    d = shape.size
    n = 1
    for k in range(d):
        n *= shape[k]
    s0 = st[0]
    buf = np.empty(s0)
    idx = np.zeros(d, np.int64)
    hp = np.empty(d + 1, np.uint64)
    hp[0] = key
    for k in range(d):
        hp[k + 1] = hash_coord(hp[k], lo[k])
    buf[0] = 0.0
    lev = 0
    best_level = -np.inf
    if level == 0:
        best_level = 0.0
    pos = 0
    last = 0.0
    for i in range(1, n):
        k = d - 1
        idx[k] += 1
        lev += 1
        while idx[k] == shape[k]:
            lev -= shape[k]
            idx[k] = 0
            k -= 1
            idx[k] += 1
            lev += 1
        for kk in range(k, d):
            hp[kk + 1] = hash_coord(hp[kk], lo[kk] + idx[kk])
        pos += 1
        if pos == s0:
            pos = 0
        best = -np.inf
        for j in range(d):
            if idx[j] > 0:
                q = pos - st[j]
                if q < 0:
                    q += s0
                t = buf[q]
                if t > best:
                    best = t
        last = weight_from_hash(code, p0, p1, hp[d]) + best
        buf[pos] = last
        if lev == level and last > best_level:
            best_level = last
    if level >= 0:
        return best_level
    return last


@njit(cache=True, parallel=True)
def ordered_batch(code, params, keys, lo, shape, level):
    """Fused weight generation + sweep, one field per key.

    Returns the value at the far corner, or the maximum over cells at
    ``level`` steps from ``lo`` when ``level >= 0``.
    """
    n = keys.size
    out = np.empty(n)
    st = _strides(shape)
    for i in prange(n):
        out[i] = _ordered_one(code, params[0], params[1], keys[i], lo, shape, st, level)
    return out


@njit(cache=True)
def _spacetime_one(code, p0, p1, key, N, ds):
    side = 2 * N + 1
    S = 1
    for _ in range(ds):
        S *= side
    st = np.empty(ds, np.int64)
    s = 1
    for k in range(ds - 1, -1, -1):
        st[k] = s
        s *= side
    prev = np.full(S, -np.inf)
    cur = np.full(S, -np.inf)
    prev[(S - 1) // 2] = 0.0
    idx = np.zeros(ds, np.int64)
    coords = np.empty(ds + 1, np.int64)
    for t in range(1, N + 1):
        for k in range(ds):
            idx[k] = 0
        for s in range(S):
            if s > 0:
                k = ds - 1
                idx[k] += 1
                while idx[k] == side:
                    idx[k] = 0
                    k -= 1
                    idx[k] += 1
            l1 = 0
            for k in range(ds):
                l1 += abs(idx[k] - N)
            if l1 > t or (t - l1) % 2 == 1:
                cur[s] = -np.inf
                continue
            best = -np.inf
            for k in range(ds):
                if idx[k] > 0:
                    v = prev[s - st[k]]
                    if v > best:
                        best = v
                if idx[k] < side - 1:
                    v = prev[s + st[k]]
                    if v > best:
                        best = v
            for k in range(ds):
                coords[k] = idx[k] - N
            coords[ds] = t
            cur[s] = weight_from_hash(code, p0, p1, point_hash(key, coords)) + best
        tmp = prev
        prev = cur
        cur = tmp
    m = -np.inf
    for s in range(S):
        if prev[s] > m:
            m = prev[s]
    return m


@njit(cache=True, parallel=True)
def spacetime_ground_batch(code, params, keys, N, d):
    """Polymer ground state from the origin over N time steps, one per key."""
    n = keys.size
    out = np.empty(n)
    for i in prange(n):
        if N == 0:
            out[i] = 0.0
        else:
            out[i] = _spacetime_one(code, params[0], params[1], keys[i], N, d - 1)
    return out


@njit(cache=True)
def backtrack(back, deltas, end, start, length):
    """Direction indices of the canonical path start -> end (flat indices)."""
    out = np.empty(length, np.int64)
    pos = end
    k = length
    while pos != start and k > 0:
        j = back[pos]
        k -= 1
        out[k] = j
        pos -= deltas[j]
    return out[k:]
