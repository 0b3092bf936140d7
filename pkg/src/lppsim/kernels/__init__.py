"""Hot kernels: numba by default, pure numpy when ``LPPSIM_DISABLE_NUMBA=1``.

Both backends expose the same functions::

    fill_box, weights_at, ordered_dp, spacetime_dp,
    ordered_batch, spacetime_ground_batch, ndtri, backtrack

``get_backend(name)`` returns a specific backend regardless of the flag,
which is what the tests and ``benchmarks/bench_kernels.py`` use.
"""
import os

from . import _numpy
from ._common import (  # noqa: F401
    BERNOULLI,
    GAMMA,
    GAUSSIAN,
    GEOMETRIC,
    POINTMASS,
    UNIFORM,
    stream_key,
)

_FLAG = "LPPSIM_DISABLE_NUMBA"


def _numba_disabled() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() not in ("", "0", "false", "no")


try:
    from . import _numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None
    HAVE_NUMBA = False


def get_backend(name: str | None = None):
    if name is None:
        name = "numpy" if (_numba_disabled() or not HAVE_NUMBA) else "numba"
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        return _numba
    if name == "numpy":
        return _numpy
    raise ValueError(f"unknown kernel backend {name!r}")


backend = get_backend()
BACKEND_NAME = "numba" if backend is _numba else "numpy"

fill_box = backend.fill_box
weights_at = backend.weights_at
ordered_dp = backend.ordered_dp
spacetime_dp = backend.spacetime_dp
ordered_batch = backend.ordered_batch
spacetime_ground_batch = backend.spacetime_ground_batch
ndtri = backend.ndtri
backtrack = backend.backtrack
