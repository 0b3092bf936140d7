"""Experiment configs: flat TOML with a ``[dist]`` table.

Example::

    scenario = "variance-scan"
    seed = 7
    Ns = [8, 16, 32]
    n = 2000

    [dist]
    dist = "geometric"
    q = 0.5
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigError
from ..randomness import DistributionSpec

REQUIRED = object()

# fields every scenario accepts; values are (converter, default)
RUN_FIELDS = ("scenario", "seed", "experiment_id", "out", "format", "shard", "trace", "workers")


@dataclass(frozen=True)
class Field:
    conv: object
    default: object = REQUIRED
    doc: str = ""


def _int(name, v):
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            return int(v)
        raise ConfigError(f"field {name!r}: expected an integer, got {v!r}")
    return v


def pos_int(name, v):
    v = _int(name, v)
    if v < 1:
        raise ConfigError(f"field {name!r}: must be positive, got {v}")
    return v


def nonneg_int(name, v):
    v = _int(name, v)
    if v < 0:
        raise ConfigError(f"field {name!r}: must be nonnegative, got {v}")
    return v


def real(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field {name!r}: expected a number, got {v!r}")
    v = float(v)
    if math.isnan(v):
        raise ConfigError(f"field {name!r}: NaN is not allowed")
    return v


def unit_interval(name, v):
    v = real(name, v)
    if not 0 < v < 1:
        raise ConfigError(f"field {name!r}: must lie in (0, 1), got {v}")
    return v


def boolean(name, v):
    if not isinstance(v, bool):
        raise ConfigError(f"field {name!r}: expected true or false, got {v!r}")
    return v


def string(name, v):
    if not isinstance(v, str):
        raise ConfigError(f"field {name!r}: expected a string, got {v!r}")
    return v


def choice(*options):
    def conv(name, v):
        v = string(name, v)
        if v not in options:
            raise ConfigError(f"field {name!r}: {v!r} is not one of {list(options)}")
        return v
    return conv


def list_of(item, length: int | None = None, min_len: int = 1):
    def conv(name, v):
        if not isinstance(v, (list, tuple)):
            raise ConfigError(f"field {name!r}: expected a list, got {v!r}")
        if length is not None and len(v) != length:
            raise ConfigError(f"field {name!r}: expected {length} entries, got {len(v)}")
        if len(v) < min_len:
            raise ConfigError(f"field {name!r}: expected at least {min_len} entries")
        return tuple(item(f"{name}[{i}]", x) for i, x in enumerate(v))
    return conv


point = list_of(nonneg_int)
int_list = list_of(pos_int)
real_list = list_of(real)


def optional(conv):
    def wrapped(name, v):
        return None if v is None else conv(name, v)
    return wrapped


def parse_shard(text) -> tuple[int, int]:
    try:
        k, m = (int(p) for p in str(text).split("/"))
    except ValueError:
        raise ConfigError(f"shard must look like K/M, got {text!r}") from None
    if not (m >= 1 and 0 <= k < m):
        raise ConfigError(f"shard {text!r}: need 0 <= K < M")
    return k, m


_RUN_CONV = {
    "seed": Field(nonneg_int, 0),
    "experiment_id": Field(nonneg_int, 0),
    "out": Field(string, "lppsim-out"),
    "format": Field(choice("json", "csv"), "json"),
    "shard": Field(string, "0/1"),
    "trace": Field(boolean, False),
    "workers": Field(pos_int, 1),
}


@dataclass
class ExperimentConfig:
    """A validated experiment. ``params`` holds the scenario's own fields."""

    scenario: str
    dists: tuple
    params: dict
    seed: int = 0
    experiment_id: int = 0
    out: str = "lppsim-out"
    format: str = "json"
    shard: tuple = (0, 1)
    trace: bool = False
    workers: int = 1
    extra: dict = field(default_factory=dict)

    @property
    def dist(self) -> DistributionSpec | None:
        return self.dists[0] if self.dists else None

    def __getitem__(self, key):
        return self.params[key]

    def echo(self) -> dict:
        """Everything that determines the results (no output or sharding fields)."""
        dist = [d.to_config() for d in self.dists]
        return {"scenario": self.scenario, "seed": self.seed, "experiment_id": self.experiment_id,
                "dist": dist[0] if len(dist) == 1 else dist,
                "params": {k: list(v) if isinstance(v, tuple) else v
                           for k, v in sorted(self.params.items())}}

    def config_hash(self) -> str:
        text = json.dumps(self.echo(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(text.encode()).hexdigest()


def _parse_dists(raw, default) -> tuple:
    if raw is None:
        if default is None:
            raise ConfigError("missing [dist] table")
        raw = default
    tables = raw if isinstance(raw, list) else [raw]
    out = []
    for t in tables:
        if isinstance(t, str):
            t = {"dist": t}
        if not isinstance(t, dict):
            raise ConfigError(f"field 'dist': expected a table, got {t!r}")
        out.append(DistributionSpec.from_config(t))
    return tuple(out)


def build_config(data: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a raw mapping (parsed TOML plus command-line overrides)."""
    from .scenarios import SCENARIOS

    data = dict(data)
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    name = data.pop("scenario", None)
    if name is None:
        raise ConfigError("missing field 'scenario'")
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; valid: {sorted(SCENARIOS)}")
    scen = SCENARIOS[name]
    dists = _parse_dists(data.pop("dist", None), scen.default_dist)
    if len(dists) > 1 and not scen.multi_dist:
        raise ConfigError(f"scenario {name!r} takes a single [dist] table")
    run = {}
    for key, f in _RUN_CONV.items():
        run[key] = f.conv(key, data.pop(key)) if key in data else f.default
    params = {}
    for key, f in scen.fields.items():
        if key in data:
            params[key] = f.conv(key, data.pop(key))
        elif f.default is REQUIRED:
            raise ConfigError(f"scenario {name!r}: missing field {key!r}")
        else:
            params[key] = f.default
    if data:
        raise ConfigError(f"scenario {name!r}: unknown fields {sorted(data)}; "
                          f"valid: {sorted(set(scen.fields) | set(_RUN_CONV) | {'dist'})}")
    cfg = ExperimentConfig(name, dists, params, run["seed"], run["experiment_id"], run["out"],
                           run["format"], parse_shard(run["shard"]), run["trace"], run["workers"])
    scen.validate(cfg)
    return cfg


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate config text; TOML syntax errors carry line numbers."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config syntax error: {exc}") from None
    return build_config(data, overrides)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), overrides)


def parse_value(text: str):
    """A TOML scalar or list from a ``--set key=value`` argument; bare words become strings."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text
