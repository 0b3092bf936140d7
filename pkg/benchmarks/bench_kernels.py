"""Numba vs pure-numpy kernel timings.

    python benchmarks/bench_kernels.py [--repeat 3] [--quick]

Each case runs once untimed (numba compiles on first call), then the best
of ``--repeat`` runs is reported along with the speedup and a check that
both backends returned the same numbers.
"""
import argparse
import time

import numpy as np

from lppsim.kernels import get_backend
from lppsim.randomness import DistributionSpec, sample_keys

SPEC = DistributionSpec.gaussian()
PARAMS = SPEC.kernel_params()


def _keys(n, seed=1):
    return sample_keys(seed, 0, np.arange(n))


def cases(quick: bool):
    n = 64 if quick else 256
    keys = _keys(n)
    side = 64 if quick else 128
    shape = np.array([side + 1, side + 1], dtype=np.int64)
    zero2 = np.zeros(2, dtype=np.int64)
    box = np.array([256, 256], dtype=np.int64)
    return [
        (f"fill_box {box[0]}x{box[1]}",
         lambda k: k.fill_box(SPEC.code, PARAMS, int(keys[0]), zero2, box)),
        (f"ordered_batch x=({side},{side}) n={n}",
         lambda k: k.ordered_batch(SPEC.code, PARAMS, keys, zero2, shape, -1)),
        (f"ordered_batch d=3 x=(24,24,24) n={n // 4}",
         lambda k: k.ordered_batch(SPEC.code, PARAMS, keys[:n // 4], np.zeros(3, np.int64),
                                   np.full(3, 25, np.int64), -1)),
        (f"spacetime_ground_batch N={side} n={n // 4}",
         lambda k: k.spacetime_ground_batch(SPEC.code, PARAMS, keys[:n // 4], side, 2)),
    ]


def best_of(fn, repeat):
    out = fn()  # warm-up / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)
    fast, slow = get_backend("numba"), get_backend("numpy")
    print(f"{'case':<44}{'numba [s]':>11}{'numpy [s]':>11}{'speedup':>9}  agree")
    for name, fn in cases(args.quick):
        t_nb, r_nb = best_of(lambda: fn(fast), args.repeat)
        t_np, r_np = best_of(lambda: fn(slow), args.repeat)
        agree = np.allclose(r_nb, r_np, rtol=1e-12, atol=0)
        print(f"{name:<44}{t_nb:>11.4f}{t_np:>11.4f}{t_np / t_nb:>8.1f}x  {agree}")


if __name__ == "__main__":
    main()
