"""Seeded i.i.d. vertex weights, quantile functions, clamping and clamp ratios.

Weights are counter based: a 64-bit key derived from
(master_seed, experiment_id, sample_index, stream) is hashed together with
the coordinates of a point, so any vertex can be regenerated on demand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate, special, stats

from . import kernels
from .errors import ConfigError, DegenerateWindow

_NAMES = {
    "gaussian": kernels.GAUSSIAN,
    "uniform": kernels.UNIFORM,
    "gamma": kernels.GAMMA,
    "geometric": kernels.GEOMETRIC,
    "bernoulli": kernels.BERNOULLI,
    "pointmass": kernels.POINTMASS,
}
_ALIASES = {"normal": "gaussian", "uniform01": "uniform", "point": "pointmass"}
_PARAMS = {
    "gaussian": (),
    "uniform": (),
    "gamma": ("shape", "rate"),
    "geometric": ("q",),
    "bernoulli": ("p",),
    "pointmass": ("c",),
}

_SUPPORT = {"gaussian": (-math.inf, math.inf), "uniform": (0.0, 1.0),
            "gamma": (0.0, math.inf)}
_QUAD_EPSREL = 1e-11
DENOMINATOR_FLOOR = 1e-300


@dataclass(frozen=True)
class DistributionSpec:
    """One of the six supported vertex-weight laws.

    ``params`` holds the named parameters in a fixed order:
    gamma (shape, rate), geometric (q,), bernoulli (p,), pointmass (c,).
    Geometric has support {0, 1, ...} with P(X = k) = (1 - q) q^k.
    """

    name: str
    params: tuple = ()

    def __post_init__(self):
        name = _ALIASES.get(self.name.lower(), self.name.lower())
        if name not in _NAMES:
            raise ConfigError(f"unknown distribution {self.name!r}; valid: {sorted(_NAMES)}")
        object.__setattr__(self, "name", name)
        params = tuple(float(p) for p in self.params)
        if len(params) != len(_PARAMS[name]):
            raise ConfigError(f"{name} takes parameters {_PARAMS[name]}, got {params}")
        object.__setattr__(self, "params", params)
        self._check()

    def _check(self):
        p = self.params
        bad = (
            (self.name == "gamma" and not (p[0] > 0 and p[1] > 0))
            or (self.name == "geometric" and not 0 < p[0] < 1)
            or (self.name == "bernoulli" and not 0 <= p[0] <= 1)
            or (self.name == "pointmass" and not math.isfinite(p[0]))
        )
        if bad:
            raise ConfigError(f"parameters {p} out of range for {self.name}")

    # constructors
    @classmethod
    def gaussian(cls):
        return cls("gaussian")

    @classmethod
    def uniform(cls):
        return cls("uniform")

    @classmethod
    def gamma(cls, shape: float, rate: float = 1.0):
        return cls("gamma", (shape, rate))

    @classmethod
    def geometric(cls, q: float):
        return cls("geometric", (q,))

    @classmethod
    def bernoulli(cls, p: float):
        return cls("bernoulli", (p,))

    @classmethod
    def pointmass(cls, c: float):
        return cls("pointmass", (c,))

    @classmethod
    def from_config(cls, cfg: dict) -> "DistributionSpec":
        """Build from ``{"dist": "gamma", "shape": 2.0, "rate": 1.0}``."""
        cfg = dict(cfg)
        if "dist" not in cfg:
            raise ConfigError("distribution table needs a 'dist' field")
        raw = str(cfg.pop("dist"))
        name = _ALIASES.get(raw.lower(), raw.lower())
        if name not in _NAMES:
            raise ConfigError(f"unknown distribution {raw!r}; valid: {sorted(_NAMES)}")
        names = _PARAMS[name]
        extra = set(cfg) - set(names)
        if extra:
            raise ConfigError(f"unknown fields {sorted(extra)} for {name}; expected {names}")
        if name == "gamma" and "rate" not in cfg:
            cfg["rate"] = 1.0
        missing = [k for k in names if k not in cfg]
        if missing:
            raise ConfigError(f"missing fields {missing} for {name}")
        try:
            return cls(name, tuple(float(cfg[k]) for k in names))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad parameter value for {name}: {exc}") from None

    def to_config(self) -> dict:
        out = {"dist": self.name}
        out.update(zip(_PARAMS[self.name], self.params))
        return out

    # properties
    @property
    def code(self) -> int:
        return _NAMES[self.name]

    def kernel_params(self) -> np.ndarray:
        """(p0, p1) as the kernels expect them."""
        if self.name == "geometric":
            q = self.params[0]
            return np.array([q, 1.0 / math.log(q)])
        if self.name in ("gaussian", "uniform"):
            return np.zeros(2)
        if self.name == "gamma":
            return np.array(self.params)
        return np.array([self.params[0], 0.0])

    @property
    def continuous(self) -> bool:
        return self.name in ("gaussian", "uniform", "gamma")

    @property
    def degenerate(self) -> bool:
        if self.name == "pointmass":
            return True
        return self.name == "bernoulli" and self.params[0] in (0.0, 1.0)

    def scipy(self):
        """Frozen scipy distribution for the law."""
        p = self.params
        if self.name == "gaussian":
            return stats.norm()
        if self.name == "uniform":
            return stats.uniform()
        if self.name == "gamma":
            return stats.gamma(p[0], scale=1.0 / p[1])
        if self.name == "geometric":
            # scipy's geom lives on {1, 2, ...} with success prob 1 - q
            return stats.geom(1.0 - p[0], loc=-1)
        if self.name == "bernoulli":
            return stats.bernoulli(p[0])
        raise ValueError("point masses have no scipy law")

    def mean(self) -> float:
        if self.name == "pointmass":
            return self.params[0]
        return float(self.scipy().mean())

    def variance(self) -> float:
        if self.name == "pointmass":
            return 0.0
        return float(self.scipy().var())

    def __str__(self):
        if not self.params:
            return self.name
        return f"{self.name}({', '.join(f'{p:g}' for p in self.params)})"


@dataclass(frozen=True)
class SeedContext:
    """Coordinates of one random environment in the global seed space."""

    master_seed: int
    experiment_id: int = 0
    sample_index: int = 0
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 1 << 64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")

    @property
    def key(self) -> int:
        return kernels.stream_key(self.master_seed, self.experiment_id,
                                  self.sample_index, self.stream)

    def substream(self, stream: int) -> "SeedContext":
        return SeedContext(self.master_seed, self.experiment_id, self.sample_index, stream)

    def sample(self, index: int) -> "SeedContext":
        return SeedContext(self.master_seed, self.experiment_id, index, self.stream)


def sample_keys(master_seed: int, experiment_id: int, indices: Iterable[int],
                stream: int = 0) -> np.ndarray:
    """Vectorized ``stream_key`` over sample indices (identical values)."""
    from .kernels import _common, _numpy

    idx = np.asarray(indices, dtype=np.int64)
    k = _common.mix64(master_seed + _common.GOLDEN)
    k = _common.mix64((k ^ (experiment_id & _common.MASK64)) + _common.GOLDEN)
    golden = np.uint64(_common.GOLDEN)
    with np.errstate(over="ignore"):
        kv = _numpy.mix64((np.uint64(k) ^ idx.astype(np.uint64)) + golden)
        kv = _numpy.mix64((kv ^ np.uint64(stream & _common.MASK64)) + golden)
    return kv


def sample_weights(spec: DistributionSpec, ctx: SeedContext, points) -> np.ndarray:
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=np.int64)))
    return kernels.weights_at(spec.code, spec.kernel_params(), np.uint64(ctx.key), pts)


def sample_weight(spec: DistributionSpec, ctx: SeedContext, point: Sequence[int]) -> float:
    return float(sample_weights(spec, ctx, [tuple(point)])[0])


def inverse_cdf(spec: DistributionSpec, u: float) -> float:
    """Smallest x with F(x) >= u."""
    if not 0.0 < u < 1.0:
        raise ValueError(f"u = {u} is outside (0, 1)")
    p = spec.params
    if spec.name == "gaussian":
        return float(special.ndtri(u))
    if spec.name == "uniform":
        return float(u)
    if spec.name == "gamma":
        return float(special.gammaincinv(p[0], u) / p[1])
    if spec.name == "geometric":
        # F(k) = 1 - q^(k+1); a few ulps of slack so u = F(k) computed
        # elsewhere still maps back to k
        lq = math.log(p[0])
        target = u * (1.0 - 1e-14)

        def F(k):
            return -math.expm1((k + 1) * lq)

        k = max(0, math.ceil(math.log1p(-u) / lq - 1.0))
        while k > 0 and F(k - 1) >= target:
            k -= 1
        while F(k) < target:
            k += 1
        return float(k)
    if spec.name == "bernoulli":
        return 0.0 if u <= 1.0 - p[0] else 1.0
    return p[0]


@dataclass(frozen=True)
class ClampWindow:
    """Window [A, B] for x -> min(max(x, A), B); A may be -inf and B +inf."""

    A: float = -math.inf
    B: float = math.inf

    def __post_init__(self):
        A, B = parse_extended(self.A), parse_extended(self.B)
        if not A < B:
            raise ValueError(f"clamp window needs A < B, got [{A}, {B}]")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    def to_config(self) -> list:
        return [format_extended(self.A), format_extended(self.B)]


def parse_extended(x) -> float:
    if isinstance(x, str):
        s = x.strip().lower()
        if s in ("inf", "+inf"):
            return math.inf
        if s == "-inf":
            return -math.inf
    return float(x)


def format_extended(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def clamp(x, w: ClampWindow):
    """min(max(x, A), B), elementwise for arrays."""
    if np.ndim(x):
        return np.minimum(np.maximum(x, w.A), w.B)
    return min(max(x, w.A), w.B)


# ---------------------------------------------------------------- clamp ratio


def _quad(f, lo, hi) -> float:
    if not lo < hi:
        return 0.0
    val, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=_QUAD_EPSREL, limit=400)
    return val


def _tails(spec: DistributionSpec):
    """Scalar (cdf, sf, median) for a continuous law; cheaper than frozen scipy."""
    if spec.name == "gaussian":
        return special.ndtr, (lambda t: special.ndtr(-t)), 0.0
    if spec.name == "uniform":
        def cdf(t):
            return min(max(t, 0.0), 1.0)

        def sf(t):
            return min(max(1.0 - t, 0.0), 1.0)

        return cdf, sf, 0.5
    alpha, beta = spec.params

    def cdf(t):
        return special.gammainc(alpha, beta * t) if t > 0 else 0.0

    def sf(t):
        return special.gammaincc(alpha, beta * t) if t > 0 else 1.0

    return cdf, sf, float(special.gammaincinv(alpha, 0.5) / beta)


def _window_mass(spec, a, b) -> float:
    # P(a < X < b) from whichever tail is more accurate
    cdf, sf, med = _tails(spec)
    if b <= med:
        return float(cdf(b) - cdf(a))
    return float(sf(a) - sf(b))


def _continuous_numerator(spec: DistributionSpec, a: float, b: float) -> float:
    """E|Y - E Y| for Y = clamp(X, [a, b]) via tail integrals.

    With D = Y - a >= 0 we have E D = int_a^b S and E(D - c)^+ = int_{a+c}^b S,
    where S is the survival function; only tail probabilities are integrated,
    which keeps tiny windows far in the tail accurate.
    """
    cdf, sf, _ = _tails(spec)
    # Y is unchanged when the window is clipped to the support
    lo, hi = _SUPPORT[spec.name]
    a, b = max(a, lo), min(b, hi)
    if a >= b:
        return 0.0
    if math.isinf(a) and math.isinf(b):
        mu = spec.mean()
        return 2.0 * _quad(sf, mu, math.inf)
    if not math.isinf(a):
        delta = _quad(sf, a, b)
        return 2.0 * _quad(sf, a + delta, b)
    delta = _quad(cdf, a, b)
    return 2.0 * _quad(cdf, a, b - delta)


def _discrete_atoms(spec: DistributionSpec):
    if spec.name == "bernoulli":
        p = spec.params[0]
        return np.array([0.0, 1.0]), np.array([1.0 - p, p])
    q = spec.params[0]
    kmax = int(math.ceil(math.log(1e-20) / math.log(q))) + 1
    k = np.arange(kmax + 1, dtype=np.float64)
    return k, (1.0 - q) * q ** k


def clamp_ratio(spec: DistributionSpec, a: float, b: float) -> float:
    """E|X^b v a - E(X^b v a)| over the window weight.

    The weight is P(a < X < b), except for gamma laws where it is
    E[(1 + X) 1{a < X < b}].
    """
    a, b = parse_extended(a), parse_extended(b)
    if not a < b:
        raise DegenerateWindow(f"empty window ({a}, {b})")
    if spec.name == "pointmass":
        raise DegenerateWindow("a point mass has no non-degenerate clamp window")
    if spec.continuous:
        if spec.name == "gamma":
            alpha, beta = spec.params
            logc = alpha * math.log(beta) - special.gammaln(alpha)

            def dens(t):
                return (1.0 + t) * math.exp(logc + (alpha - 1.0) * math.log(t) - beta * t) if t > 0 else 0.0

            den = _quad(dens, max(a, 0.0), b) if b > 0 else 0.0
        else:
            den = _window_mass(spec, a, b)
        if not den > DENOMINATOR_FLOOR:
            raise DegenerateWindow(f"window ({a}, {b}) carries no mass for {spec}")
        num = _continuous_numerator(spec, a, b)
    else:
        xs, ps = _discrete_atoms(spec)
        inside = (xs > a) & (xs < b)
        den = float(ps[inside].sum())
        if not den > DENOMINATOR_FLOOR:
            raise DegenerateWindow(f"window ({a}, {b}) carries no mass for {spec}")
        y = np.clip(xs, a, b)
        num = float((ps * np.abs(y - (ps * y).sum())).sum())
    return max(num, 0.0) / den


@dataclass
class RatioReport:
    distribution: DistributionSpec
    grid: list
    ratios: np.ndarray
    labels: list = field(default_factory=list)

    @property
    def sup_observed(self) -> float:
        return float(np.max(self.ratios))

    @property
    def argmax(self):
        return self.grid[int(np.argmax(self.ratios))]

    def sup_by_label(self) -> dict:
        out: dict = {}
        for lab, r in zip(self.labels, self.ratios):
            out[lab] = max(out.get(lab, 0.0), float(r))
        return out

    def to_dict(self) -> dict:
        return {
            "distribution": self.distribution.to_config(),
            "n_windows": len(self.grid),
            "sup_observed": self.sup_observed,
            "argmax": [format_extended(v) for v in self.argmax],
            "sup_by_case": self.sup_by_label(),
        }


def default_ratio_grid(spec: DistributionSpec, size: int = 200) -> tuple[list, list]:
    """Windows (a, b) with a label naming the region each one probes."""
    inf = math.inf
    grid: list = []
    labels: list = []

    def add(a, b, lab):
        grid.append((float(a), float(b)))
        labels.append(lab)

    if spec.name == "uniform":
        pts = np.linspace(0.0, 1.0, size)
        for i, a in enumerate(pts):
            for b in pts[i + 1:]:
                add(a, b, "finite")
        for t in pts:
            if t > 0:
                add(-inf, t, "half-infinite")
            if t < 1:
                add(t, inf, "half-infinite")
        add(-inf, inf, "full")
    elif spec.name == "gaussian":
        # (i): 1 < a < b < a + a^-2
        for a in np.linspace(1.01, 6.0, 40):
            for frac in np.linspace(0.05, 1.0, 12):
                add(a, a + frac * a ** -2, "i")
        # (ii): a > 1, b >= a + a^-2
        for a in np.linspace(1.01, 6.0, 40):
            for mult in (1.0, 1.5, 2.0, 4.0, 10.0, 100.0):
                add(a, a + mult * a ** -2, "ii")
            add(a, inf, "ii")
        # (iii): |a| <= 1, b - a < 1
        for a in np.linspace(-1.0, 1.0, 21):
            for width in np.linspace(0.01, 0.99, 15):
                add(a, a + width, "iii")
        # (iv): a <= 1, b - a >= 1
        for a in np.linspace(-6.0, 1.0, 29):
            for width in (1.0, 1.5, 2.0, 4.0, 8.0):
                add(a, a + width, "iv")
            add(a, inf, "iv")
        for b in np.linspace(-6.0, 6.0, 25):
            add(-inf, b, "half-infinite")
        add(-inf, inf, "full")
    elif spec.name == "gamma":
        alpha, beta = spec.params
        scale = (alpha + 10.0 * math.sqrt(alpha) + 10.0) / beta
        lows = np.concatenate([[0.0], np.geomspace(1e-3, 1.0, 20) * scale])
        for a in lows:
            for width in np.geomspace(1e-3, 1.0, 20) * scale:
                add(a, a + width, "finite")
            add(a, inf, "half-infinite")
        for b in np.geomspace(1e-3, 1.0, 20) * scale:
            add(-inf, b, "half-infinite")
        add(-inf, inf, "full")
    else:
        xs, _ = _discrete_atoms(spec)
        cuts = np.concatenate([[-0.5], xs[:30] + 0.5])
        for i, a in enumerate(cuts[:-1]):
            for b in cuts[i + 1:]:
                add(a, b, "finite")
            add(a, inf, "half-infinite")
        add(-inf, inf, "full")
    return grid, labels


def scan_ratio_sup(spec: DistributionSpec, grid_spec=None) -> RatioReport:
    """Clamp ratios over a window grid.

    ``grid_spec`` is ``None`` / ``"default"`` for the built-in grid of the law,
    an int (grid resolution for the default grid), or an explicit list of
    ``(a, b)`` windows.
    """
    if spec.name == "pointmass":
        raise DegenerateWindow("a point mass has no non-degenerate clamp window")
    if grid_spec is None or grid_spec == "default":
        grid, labels = default_ratio_grid(spec)
    elif isinstance(grid_spec, int):
        grid, labels = default_ratio_grid(spec, grid_spec)
    else:
        grid = [(parse_extended(a), parse_extended(b)) for a, b in grid_spec]
        labels = ["custom"] * len(grid)
    ratios = np.array([clamp_ratio(spec, a, b) for a, b in grid])
    return RatioReport(spec, grid, ratios, labels)
