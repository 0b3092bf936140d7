"""Scenario definitions.

A scenario declares its fields, splits the work into units of indexed
samples, computes per-sample rows for any index range and reduces the
concatenated rows (always in index order) into metrics and verdicts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import estimators as est
from ..couplings import (
    BITS_STREAM,
    build_phi,
    check_reflection,
    reflection_gap_samples,
    start_from_sums,
)
from ..errors import ConfigError
from ..lattice import GraphKind, as_point
from ..passage import (
    WeightField,
    brute_force_oracle,
    embedding_comparison,
    ground_state,
    last_passage_time,
    TransportedField,
)
from ..randomness import DistributionSpec, SeedContext, sample_weights, scan_ratio_sup
from .config import (
    Field,
    REQUIRED,
    boolean,
    choice,
    int_list,
    nonneg_int,
    optional,
    point,
    pos_int,
    real,
    real_list,
    unit_interval,
    list_of,
    string,
)
from .report import verdict

_FAIR = DistributionSpec.bernoulli(0.5)


@dataclass(frozen=True)
class Unit:
    """``count`` samples with indices offset .. offset + count - 1 on experiment ``exp``."""

    name: str
    count: int
    exp: int = 0
    offset: int = 0
    block: int = 1000


@dataclass
class Outcome:
    metrics: dict
    verdicts: dict
    records: list


class Scenario:
    name = ""
    fields: dict = {}
    default_dist = None
    multi_dist = False
    help = ""

    def validate(self, cfg) -> None:
        pass

    def units(self, cfg) -> list:
        raise NotImplementedError

    def compute(self, cfg, unit: Unit, start: int, stop: int) -> np.ndarray:
        raise NotImplementedError

    def reduce(self, cfg, data: dict) -> Outcome:
        raise NotImplementedError

    def trace(self, cfg) -> list | None:
        return None

    # helpers
    @staticmethod
    def exp(cfg, unit: Unit) -> int:
        return cfg.experiment_id + unit.exp

    @staticmethod
    def indices(unit: Unit, start: int, stop: int) -> tuple[int, int]:
        return unit.offset + start, unit.offset + stop


def _stats_record(s: est.SampleStats, **extra) -> dict:
    rec = dict(extra)
    rec.update(n=s.n, mean=s.mean, mean_lo=s.mean_ci[0], mean_hi=s.mean_ci[1],
               variance=s.variance, var_lo=s.var_ci[0], var_hi=s.var_ci[1])
    return rec


def _kind(name: str) -> GraphKind:
    return GraphKind.ORDERED if name == "ordered" else GraphKind.SPACETIME


# ---------------------------------------------------------------- oracle-check


class OracleCheck(Scenario):
    name = "oracle-check"
    help = "DP against brute-force enumeration on random small targets"
    multi_dist = True
    default_dist = [{"dist": "gaussian"}, {"dist": "uniform"}, {"dist": "gamma", "shape": 2.0},
                    {"dist": "geometric", "q": 0.5}, {"dist": "bernoulli", "p": 0.5}]
    fields = {
        "n": Field(pos_int, 100),
        "dims": Field(int_list, (2, 3)),
        "max_norm": Field(pos_int, 10),
        "kind": Field(choice("ordered", "spacetime"), "ordered"),
        "tol": Field(real, 1e-12),
    }

    def units(self, cfg):
        return [Unit(f"{dist.name}_d{d}", cfg["n"], 100 * k + d, block=100)
                for k, dist in enumerate(cfg.dists) for d in cfg["dims"]]

    def _target(self, cfg, d, exp, i):
        rng = np.random.default_rng([cfg.seed, exp, i, 0x0AC1E])
        L = int(rng.integers(1, cfg["max_norm"] + 1))
        if cfg["kind"] == "ordered":
            return tuple(int(c) for c in rng.multinomial(L, np.full(d, 1.0 / d)))
        moves = rng.integers(0, 2 * (d - 1), size=L)
        x = np.zeros(d, dtype=np.int64)
        for mv in moves:
            x[mv // 2] += 1 if mv % 2 == 0 else -1
        x[-1] = L
        return tuple(int(c) for c in x)

    def compute(self, cfg, unit, start, stop):
        k, d = divmod(unit.exp, 100)
        spec = cfg.dists[k]
        kind = _kind(cfg["kind"])
        exp = self.exp(cfg, unit)
        rows = np.empty((stop - start, 2))
        for r, i in enumerate(range(*self.indices(unit, start, stop))):
            y = self._target(cfg, d, exp, i)
            fld = WeightField(spec, SeedContext(cfg.seed, exp, i))
            o = (0,) * d
            t = last_passage_time(fld, o, y, kind)
            rows[r] = abs(t - brute_force_oracle(fld, o, y, kind)), t
        return rows

    def reduce(self, cfg, data):
        records, worst = [], 0.0
        for name, rows in data.items():
            m = float(rows[:, 0].max())
            worst = max(worst, m)
            records.append({"unit": name, "n": int(rows.shape[0]), "max_abs_diff": m})
        v = {"oracle_equal": verdict(worst <= cfg["tol"], f"max |DP - brute force| <= {cfg['tol']:g}",
                                     value=worst)}
        return Outcome({"max_abs_diff": worst}, v, records)


# ---------------------------------------------------------------- influence-map


class InfluenceMapScenario(Scenario):
    name = "influence-map"
    help = "empirical geodesic influences, optional randomized start and weighted variant"
    default_dist = {"dist": "gaussian"}
    fields = {
        "x": Field(point, REQUIRED),
        "n": Field(pos_int, 1000),
        "m": Field(nonneg_int, 0, "randomized start size; 0 = fixed start"),
        "compare_m": Field(nonneg_int, 0, "second map on the same fields with this m"),
        "weighted": Field(boolean, False),
        "check_vertex": Field(optional(point), None),
        "expect": Field(optional(real), None),
        "tol": Field(optional(real), None),
    }

    def validate(self, cfg):
        if cfg["weighted"] and cfg.dist.name != "gamma":
            raise ConfigError("weighted influences need a gamma [dist]")
        if (cfg["check_vertex"] is None) != (cfg["expect"] is None):
            raise ConfigError("check_vertex and expect go together")

    def units(self, cfg):
        us = [Unit("base", cfg["n"], block=500)]
        if cfg["compare_m"]:
            us.append(Unit("compare", cfg["n"], block=500))
        return us

    def compute(self, cfg, unit, start, stop):
        m = cfg["m"] if unit.name == "base" else cfg["compare_m"]
        cells, vals, ws = est.geodesic_samples(cfg.dist, cfg["x"], cfg.seed, self.exp(cfg, unit),
                                               *self.indices(unit, start, stop), m or None)
        if unit.name == "base" and cfg["weighted"]:
            return np.hstack([cells.astype(np.float64), vals[:, None], ws])
        return cells

    def _map(self, cfg, rows, m, weighted):
        x = as_point(cfg["x"])
        L = x.norm1
        if weighted:
            cells = rows[:, :L].astype(np.int64)
            return est.influence_from_cells(x, cells, m, rows[:, L + 1:], rows[:, L])
        return est.influence_from_cells(x, rows, m)

    def reduce(self, cfg, data):
        x = as_point(cfg["x"])
        base = self._map(cfg, data["base"], cfg["m"] or None, cfg["weighted"])
        rows = data["base"][:, :x.norm1].astype(np.int64)
        distinct = bool((np.diff(rows, axis=1) > 0).all())
        metrics = {"base": base.to_dict()}
        v = {"sum_identity": verdict(distinct and base.total == base.n * x.norm1,
                                     "every geodesic has |x| distinct vertices; sum of I = |x|",
                                     value=base.total / base.n)}
        if cfg["check_vertex"] is not None:
            val = base.influence(cfg["check_vertex"])
            tol = cfg["tol"] if cfg["tol"] is not None else 0.0
            v["vertex_influence"] = verdict(abs(val - cfg["expect"]) <= tol,
                                            f"I at {list(cfg['check_vertex'])} within {cfg['expect']:g} +- {tol:g}",
                                            value=val)
        if cfg["weighted"]:
            err = float(np.abs(base.path_sums[:, 0] - base.path_sums[:, 1]).max())
            v["weighted_identity"] = verdict(err <= 1e-10, "per sample sum over path of (1 + w) = |x| + T",
                                             value=err)
            v["weighted_dominates"] = verdict(bool((base.J >= base.I).all()), "J >= I pointwise")
        records = [{"map": "base", "v": c, "I": i, "J": j} for c, i, j in base.rows()]
        if cfg["compare_m"]:
            cmp_map = self._map(cfg, data["compare"], cfg["compare_m"], False)
            metrics["compare"] = cmp_map.to_dict()
            b_lo = metrics["base"]["max_I_ci"][0]
            c_hi = metrics["compare"]["max_I_ci"][1]
            v["spreading"] = verdict(c_hi < b_lo, "max I with compare_m: upper CI below lower CI of base "
                                     "(paired fields, Wilson 0.95)",
                                     value=[metrics["compare"]["max_I"], metrics["base"]["max_I"]])
            records += [{"map": "compare", "v": c, "I": i, "J": j} for c, i, j in cmp_map.rows()]
        return Outcome(metrics, v, records)


# ---------------------------------------------------------------- scaling scans


def _ratio_verdict(Ns, stats):
    first, last = stats[0], stats[-1]
    hi_last = last.var_ci[1] / Ns[-1]
    lo_first = first.var_ci[0] / Ns[0]
    return verdict(hi_last < lo_first, f"var/N at N={Ns[-1]} below var/N at N={Ns[0]}, CIs disjoint",
                   value=[last.variance / Ns[-1], first.variance / Ns[0]])


def _range_verdict(fit, rng, label):
    if rng is None:
        return None
    if fit is None:
        return verdict(False, f"{label} fit in [{rng[0]:g}, {rng[1]:g}] (fit refused)")
    return verdict(rng[0] <= fit.slope <= rng[1], f"{label} fit in [{rng[0]:g}, {rng[1]:g}]",
                   value=fit.slope)


class VarianceScan(Scenario):
    name = "variance-scan"
    help = "variance of T(0, N direction) over dyadic N with exponent fit"
    fields = {
        "Ns": Field(int_list, REQUIRED),
        "direction": Field(point, (1, 1)),
        "n": Field(pos_int, 1000),
        "chi_range": Field(optional(list_of(real, 2)), None),
        "ratio_decreasing": Field(boolean, False),
    }

    def validate(self, cfg):
        if cfg.dist is None:
            raise ConfigError("missing [dist] table")
        if cfg["n"] < 2:
            raise ConfigError("field 'n': need at least 2 samples")

    def units(self, cfg):
        return [Unit(f"N{N}", cfg["n"], k, block=max(16, 2_000_000 // (N + 1) ** 2))
                for k, N in enumerate(cfg["Ns"])]

    def compute(self, cfg, unit, start, stop):
        N = int(unit.name[1:])
        x = N * np.asarray(cfg["direction"], dtype=np.int64)
        return est.passage_samples(cfg.dist, x, cfg.seed, self.exp(cfg, unit),
                                   *self.indices(unit, start, stop))

    def reduce(self, cfg, data):
        Ns = list(cfg["Ns"])
        rep = est.scaling_from_samples(Ns, [data[f"N{N}"] for N in Ns], cfg.seed)
        records = [_stats_record(s, N=N, var_over_N=s.variance / N) for N, s in zip(Ns, rep.stats)]
        v = {}
        r = _range_verdict(rep.fit, cfg["chi_range"], "chi")
        if r:
            v["chi_range"] = r
        if cfg["ratio_decreasing"]:
            v["ratio_decreasing"] = _ratio_verdict(Ns, rep.stats)
        return Outcome(rep.to_dict(), v, records)


class Polymer(Scenario):
    name = "polymer"
    help = "ground-state variance scaling, with the ground-state reflection gap"
    default_dist = {"dist": "gaussian"}
    fields = {
        "Ns": Field(int_list, REQUIRED),
        "n": Field(pos_int, 1000),
        "d": Field(pos_int, 2),
        "kind": Field(choice("ordered", "spacetime"), "spacetime"),
        "chi_range": Field(optional(list_of(real, 2)), None),
        "ratio_decreasing": Field(boolean, False),
        "gap_n": Field(nonneg_int, 0),
        "gap_a": Field(point, (0, 32)),
        "gap_N": Field(pos_int, 64),
    }

    def units(self, cfg):
        us = [Unit(f"N{N}", cfg["n"], k, block=max(16, 1_000_000 // (2 * N + 1) ** (cfg["d"] - 1) // N))
              for k, N in enumerate(cfg["Ns"])]
        if cfg["gap_n"]:
            us.append(Unit("gap", cfg["gap_n"], 1000, block=250))
        return us

    def compute(self, cfg, unit, start, stop):
        a, b = self.indices(unit, start, stop)
        if unit.name == "gap":
            gs = reflection_gap_samples(cfg.dist, cfg["gap_a"], cfg["gap_N"], b - a, cfg.seed,
                                        self.exp(cfg, unit), ground_state=True, start=a)
            return np.array([[g.D1, g.D2] for g in gs]).reshape(-1, 2)
        N = int(unit.name[1:])
        return est.ground_samples(cfg.dist, N, cfg["d"], _kind(cfg["kind"]), cfg.seed,
                                  self.exp(cfg, unit), a, b)

    def reduce(self, cfg, data):
        Ns = list(cfg["Ns"])
        rep = est.scaling_from_samples(Ns, [data[f"N{N}"] for N in Ns], cfg.seed)
        metrics = rep.to_dict()
        records = [_stats_record(s, N=N, var_over_N=s.variance / N) for N, s in zip(Ns, rep.stats)]
        v = {}
        r = _range_verdict(rep.fit, cfg["chi_range"], "chi")
        if r:
            v["chi_range"] = r
        if cfg["ratio_decreasing"]:
            v["ratio_decreasing"] = _ratio_verdict(Ns, rep.stats)
        if cfg["gap_n"]:
            s1 = est.SampleStats.from_samples(data["gap"][:, 0], cfg.seed, 77)
            metrics["ground_state_gap_D1"] = s1.to_dict()
            v["gap_translation"] = verdict(s1.mean_ci[0] <= 0.0 <= s1.mean_ci[1],
                                           "95% CI of mean ground-state D1 contains 0",
                                           value=s1.mean)
        return Outcome(metrics, v, records)


# ---------------------------------------------------------------- tails and quantiles


class Tail(Scenario):
    name = "tail"
    help = "concentration tails P(|T - mean| >= t sqrt|x|)"
    fields = {
        "x": Field(point, REQUIRED),
        "n": Field(pos_int, 1000),
        "ts": Field(real_list, (1.0, 2.0, 3.0)),
        "oracle": Field(choice("none", "normal"), "none"),
        "envelope": Field(boolean, False),
    }

    def validate(self, cfg):
        if cfg["n"] < 1000:
            raise ConfigError("field 'n': tail estimates need n >= 1000")
        if cfg["envelope"] and 1.0 not in cfg["ts"]:
            raise ConfigError("field 'ts': the envelope fit needs t = 1 on the grid")

    def units(self, cfg):
        L = sum(cfg["x"]) + 1
        return [Unit("T", cfg["n"], block=max(64, 4_000_000 // (L * L)))]

    def compute(self, cfg, unit, start, stop):
        return est.passage_samples(cfg.dist, cfg["x"], cfg.seed, self.exp(cfg, unit),
                                   *self.indices(unit, start, stop))

    def reduce(self, cfg, data):
        rep = est.tail_from_samples(cfg["x"], data["T"], list(cfg["ts"]))
        records = [{"t": t, "p": p, "ci_lo": c[0], "ci_hi": c[1]} for t, p, c in zip(rep.ts, rep.probs, rep.cis)]
        v = {"monotone": verdict(rep.monotone, "tail weakly decreasing in t")}
        if cfg["oracle"] == "normal":
            ok = []
            for rec in records:
                rec["oracle"] = est.normal_tail(rec["t"])
                ok.append(rec["ci_lo"] <= rec["oracle"] <= rec["ci_hi"])
            v["normal_oracle"] = verdict(all(ok), "2(1 - Phi(t)) inside the 0.99 Wilson CI at every t")
        if cfg["envelope"]:
            for rec, e in zip(records, rep.envelope):
                rec["envelope"] = e
            v["envelope"] = verdict(rep.envelope_ok(), "p(t) <= 1.5 exp(-t^2/c) for t > 1, c fitted at t = 1",
                                    value=rep.envelope_c)
        return Outcome(rep.to_dict(), v, records)


class Quantiles(Scenario):
    name = "quantiles"
    help = "lower empirical quantiles of T(0, x)"
    fields = {
        "x": Field(point, REQUIRED),
        "n": Field(pos_int, 1000),
        "us": Field(list_of(unit_interval), (0.1, 0.25, 0.5, 0.75, 0.9)),
    }

    def units(self, cfg):
        return [Unit("T", cfg["n"])]

    def compute(self, cfg, unit, start, stop):
        return est.passage_samples(cfg.dist, cfg["x"], cfg.seed, self.exp(cfg, unit),
                                   *self.indices(unit, start, stop))

    def reduce(self, cfg, data):
        q = est.QuantileFn(data["T"])
        us = sorted(cfg["us"])
        vals = [q(u) for u in us]
        records = [{"u": u, "h": h} for u, h in zip(us, vals)]
        v = {"monotone": verdict(all(a <= b for a, b in zip(vals, vals[1:])), "h nondecreasing in u")}
        return Outcome({"n": int(data["T"].size), "quantiles": records}, v, records)


# ---------------------------------------------------------------- shape


class GEstimate(Scenario):
    name = "g-estimate"
    help = "shape function estimate with the dyadic superadditivity diagnostic"
    fields = {
        "direction": Field(real_list, REQUIRED),
        "N": Field(pos_int, REQUIRED),
        "n": Field(pos_int, 200),
        "expect_min": Field(optional(real), None),
    }

    def validate(self, cfg):
        if cfg["n"] < 2:
            raise ConfigError("field 'n': need at least 2 samples")
        est.lattice_target(cfg["direction"], cfg["N"])

    def _ks(self, cfg):
        ks, k = [], 1
        while k < cfg["N"]:
            if sum(est.lattice_target(cfg["direction"], k)) > 0:
                ks.append(k)
            k *= 2
        return ks + [cfg["N"]]

    def units(self, cfg):
        return [Unit(f"N{k}", cfg["n"], j, block=max(16, 2_000_000 // (k + 1) ** 2))
                for j, k in enumerate(self._ks(cfg))]

    def compute(self, cfg, unit, start, stop):
        k = int(unit.name[1:])
        return est.passage_samples(cfg.dist, est.lattice_target(cfg["direction"], k), cfg.seed,
                                   self.exp(cfg, unit), *self.indices(unit, start, stop))

    def reduce(self, cfg, data):
        ks = self._ks(cfg)
        stats = {k: est.SampleStats.from_samples(data[f"N{k}"], cfg.seed, 2 * j) for j, k in enumerate(ks)}
        N = cfg["N"]
        top = stats[N]
        g = top.mean / N
        records = [_stats_record(stats[k], N=k, target=list(est.lattice_target(cfg["direction"], k)),
                                 mean_over_N=stats[k].mean / k) for k in ks]
        checks = []
        for k in ks:
            if 2 * k in stats:
                tk = np.asarray(est.lattice_target(cfg["direction"], k))
                t2 = np.asarray(est.lattice_target(cfg["direction"], 2 * k))
                if np.array_equal(t2, 2 * tk):
                    checks.append(stats[2 * k].mean_ci[1] >= 2 * stats[k].mean_ci[0])
        metrics = {"g_hat": g, "ci": [top.mean_ci[0] / N, top.mean_ci[1] / N],
                   "target": list(est.lattice_target(cfg["direction"], N)), "N": N}
        v = {"superadditive": verdict(all(checks) if checks else None,
                                      "mean T(0, 2k x) >= 2 mean T(0, k x) within 95% CIs",
                                      value=len(checks))}
        if cfg["expect_min"] is not None:
            v["g_min"] = verdict(g >= cfg["expect_min"], f"g_hat >= {cfg['expect_min']:g}", value=g)
        return Outcome(metrics, v, records)


class Plateau(GEstimate):
    name = "plateau"
    help = "shape function of near-deterministic Bernoulli weights"
    default_dist = {"dist": "bernoulli", "p": 0.95}
    fields = dict(GEstimate.fields)
    fields.update({"direction": Field(real_list, (0.5, 0.5)), "N": Field(pos_int, 512),
                   "expect_min": Field(optional(real), 0.98)})


class Concavity(Scenario):
    name = "concavity"
    help = "paired diagonal-versus-axis gap of the shape function"
    default_dist = {"dist": "gaussian"}
    fields = {
        "N": Field(pos_int, REQUIRED),
        "n": Field(pos_int, 2000),
        "d": Field(pos_int, 2),
        "offset": Field(optional(real_list), None),
        "expect_diag_T": Field(optional(real), None),
        "tol": Field(real, 0.005),
        "require_positive": Field(boolean, True),
    }

    def validate(self, cfg):
        if cfg["d"] < 2:
            raise ConfigError("field 'd': need d >= 2")
        est.concavity_targets(cfg["N"], cfg["d"], cfg["offset"])

    def units(self, cfg):
        N = cfg["N"]
        blk = max(64, 2_000_000 // (2 * N + 1) ** 2)
        return [Unit("diag", cfg["n"], block=blk), Unit("axis", cfg["n"], block=blk)]

    def compute(self, cfg, unit, start, stop):
        diag, axis = est.concavity_targets(cfg["N"], cfg["d"], cfg["offset"])
        x = diag if unit.name == "diag" else axis
        # both units share the experiment id: paired fields
        return est.passage_samples(cfg.dist, x, cfg.seed, self.exp(cfg, unit),
                                   *self.indices(unit, start, stop))

    def reduce(self, cfg, data):
        rep = est.concavity_from_samples(cfg["N"], data["diag"], data["axis"], cfg.seed)
        metrics = rep.to_dict()
        metrics["diag_mean_T"] = float(data["diag"].mean())
        v = {}
        if cfg["require_positive"]:
            v["gap_positive"] = verdict(rep.gap.mean_ci[0] > 0, "95% CI of the paired gap above 0",
                                        value=rep.gap.mean)
        if cfg["expect_diag_T"] is not None:
            err = abs(metrics["diag_mean_T"] - cfg["expect_diag_T"])
            v["diag_oracle"] = verdict(err <= cfg["tol"], f"mean diagonal T within {cfg['tol']:g} of "
                                       f"{cfg['expect_diag_T']:.10g}", value=metrics["diag_mean_T"])
        rec = _stats_record(rep.gap, N=cfg["N"], diag_over_2N=rep.mean_diagonal, axis_over_2N=rep.mean_axis)
        return Outcome(metrics, v, [rec])


class Wandering(Scenario):
    name = "wandering"
    help = "transversal geodesic fluctuations 0 -> (N, N)"
    fields = {
        "Ns": Field(int_list, REQUIRED),
        "n": Field(pos_int, 1000),
        "xi_range": Field(optional(list_of(real, 2)), None),
    }

    def units(self, cfg):
        return [Unit(f"N{N}", cfg["n"], k, block=max(16, 1_000_000 // (N + 1) ** 2))
                for k, N in enumerate(cfg["Ns"])]

    def compute(self, cfg, unit, start, stop):
        return est.wandering_samples(cfg.dist, int(unit.name[1:]), cfg.seed, self.exp(cfg, unit),
                                     *self.indices(unit, start, stop))

    def reduce(self, cfg, data):
        Ns = list(cfg["Ns"])
        rep = est.wandering_from_samples(Ns, [data[f"N{N}"] for N in Ns], cfg.seed)
        records = [{"N": N, "mid_mean": a.mean, "mid_lo": a.mean_ci[0], "mid_hi": a.mean_ci[1],
                    "max_mean": b.mean} for N, a, b in zip(Ns, rep.mid, rep.maxes)]
        v = {}
        r = _range_verdict(rep.fit, cfg["xi_range"], "xi")
        if r:
            v["xi_range"] = r
        return Outcome(rep.to_dict(), v, records)


class ShiftScan(Scenario):
    name = "shift-scan"
    help = "L2 size of T(-e1, Nu) - T(0, Nu) and geodesic monotonicity"
    default_dist = {"dist": "gaussian"}
    fields = {
        "Ns": Field(int_list, REQUIRED),
        "n": Field(pos_int, 1000),
        "d": Field(pos_int, 2),
        "max_exponent": Field(optional(real), None),
        "tol": Field(real, 1e-9),
    }

    def units(self, cfg):
        return [Unit(f"N{N}", cfg["n"], k, block=max(16, 1_000_000 // (N + 1) ** cfg["d"]))
                for k, N in enumerate(cfg["Ns"])]

    def compute(self, cfg, unit, start, stop):
        h, bad, chk = est.shift_samples(cfg.dist, int(unit.name[1:]), cfg["d"], cfg.seed,
                                        self.exp(cfg, unit), *self.indices(unit, start, stop), cfg["tol"])
        return np.stack([h, bad, chk], axis=1)

    def reduce(self, cfg, data):
        Ns = list(cfg["Ns"])
        rows = [data[f"N{N}"] for N in Ns]
        rep = est.shift_from_samples(Ns, [r[:, 0] for r in rows], [r[:, 1] for r in rows],
                                     [r[:, 2] for r in rows], cfg.seed)
        records = [{"N": N, "l2": a, "l2_lo": c[0], "l2_hi": c[1]} for N, a, c in zip(Ns, rep.l2, rep.l2_ci)]
        v = {"monotonicity": verdict(rep.violations == 0, "h(Nu) <= h(a) for a >= 0 on the geodesic from -e1",
                                     value=rep.violations)}
        if cfg["max_exponent"] is not None:
            up = rep.fit.upper() if rep.fit else math.inf
            v["exponent"] = verdict(up < cfg["max_exponent"],
                                    f"upper 95% CI of the growth exponent below {cfg['max_exponent']:g}",
                                    value=None if rep.fit is None else rep.fit.slope)
        return Outcome(rep.to_dict(), v, records)


class ClampCheck(Scenario):
    name = "clamp-check"
    help = "variance of T clamped between pilot quantiles against the log bound"
    default_dist = {"dist": "gaussian"}
    fields = {
        "x": Field(point, REQUIRED),
        "u": Field(unit_interval, REQUIRED),
        "n": Field(pos_int, 10000),
        "pilot_n": Field(optional(pos_int), None),
        "c_G": Field(optional(real), None),
    }

    def validate(self, cfg):
        if not cfg["u"] < 0.5:
            raise ConfigError("field 'u': must lie in (0, 1/2)")
        if cfg["n"] < 2:
            raise ConfigError("field 'n': need at least 2 samples")

    def units(self, cfg):
        pilot = cfg["pilot_n"] or cfg["n"]
        L = sum(cfg["x"]) + 1
        blk = max(64, 4_000_000 // (L * L))
        return [Unit("fresh", cfg["n"], block=blk), Unit("pilot", pilot, offset=cfg["n"], block=blk)]

    def compute(self, cfg, unit, start, stop):
        return est.passage_samples(cfg.dist, cfg["x"], cfg.seed, self.exp(cfg, unit),
                                   *self.indices(unit, start, stop))

    def _c_G(self, cfg):
        if cfg["c_G"] is not None:
            return cfg["c_G"]
        if cfg.dist.name != "gaussian":
            return None
        return scan_ratio_sup(cfg.dist).sup_observed

    def reduce(self, cfg, data):
        c_G = self._c_G(cfg)
        rep = est.clamped_variance_from_samples(cfg["x"], cfg["u"], data["pilot"], data["fresh"],
                                                c_G, cfg.seed)
        v = {"contraction": verdict(rep.contraction, "clamped variance <= raw variance"),
             "bound": verdict(None if rep.bound is None else rep.passed,
                              "upper 95% CI of clamped variance <= 4u|x| / log(2 / (c_G^2 u))",
                              value=rep.bound)}
        rec = _stats_record(rep.clamped, A=rep.A, B=rep.B, bound=rep.bound)
        return Outcome(rep.to_dict(), v, [rec])


class RatioScan(Scenario):
    name = "ratio-scan"
    help = "clamp ratio over a grid of windows"
    fields = {
        "grid": Field(pos_int, 200),
        "windows": Field(optional(list_of(list_of(lambda n, v: v, 2))), None),
        "labels": Field(optional(list_of(string)), None),
        "sup_max": Field(optional(real), None),
    }

    def validate(self, cfg):
        if cfg.dist.name == "pointmass":
            raise ConfigError("a point mass has no non-degenerate clamp window")

    def _grid(self, cfg):
        from ..randomness import default_ratio_grid, parse_extended
        if cfg["windows"] is not None:
            g = [(parse_extended(a), parse_extended(b)) for a, b in cfg["windows"]]
            return g, ["custom"] * len(g)
        return default_ratio_grid(cfg.dist, cfg["grid"])

    def units(self, cfg):
        return [Unit("windows", len(self._grid(cfg)[0]), block=5000)]

    def compute(self, cfg, unit, start, stop):
        from ..randomness import clamp_ratio
        grid, _ = self._grid(cfg)
        return np.array([clamp_ratio(cfg.dist, a, b) for a, b in grid[start:stop]])

    def reduce(self, cfg, data):
        from ..randomness import RatioReport
        grid, labels = self._grid(cfg)
        rep = RatioReport(cfg.dist, grid, data["windows"], labels)
        metrics = rep.to_dict()
        v = {}
        if cfg["sup_max"] is not None:
            keep = set(cfg["labels"]) if cfg["labels"] else set(labels)
            sel = [r for r, lab in zip(rep.ratios, labels) if lab in keep]
            worst = max(sel) if sel else -math.inf
            metrics["sup_selected"] = worst
            v["sup_bound"] = verdict(bool(sel) and worst <= cfg["sup_max"],
                                     f"ratio <= {cfg['sup_max']:.10g} on windows {sorted(keep)}",
                                     value=worst)
        v["finite"] = verdict(bool(np.isfinite(rep.ratios).all()), "all ratios finite",
                              value=rep.sup_observed)
        records = [{"case": k, "sup": s} for k, s in sorted(rep.sup_by_label().items())]
        return Outcome(metrics, v, records)


class ZStartCheck(Scenario):
    name = "z-start-check"
    help = "randomized start: single-flip moves and point masses"
    default_dist = {"dist": "bernoulli", "p": 0.5}
    fields = {
        "m": Field(pos_int, REQUIRED),
        "d": Field(pos_int, 1),
        "mode": Field(choice("exhaustive", "random"), "random"),
        "trials": Field(pos_int, 100000),
    }

    def validate(self, cfg):
        if cfg["mode"] == "exhaustive" and cfg["d"] * cfg["m"] ** 2 > 24:
            raise ConfigError("exhaustive mode is limited to d m^2 <= 24 bits")

    def units(self, cfg):
        nb = cfg["d"] * cfg["m"] ** 2
        count = 1 << nb if cfg["mode"] == "exhaustive" else cfg["trials"]
        return [Unit("Z", count, block=max(256, 2_000_000 // nb))]

    def compute(self, cfg, unit, start, stop):
        m, d = cfg["m"], cfg["d"]
        mm = m * m
        nb = d * mm
        idx = np.arange(*self.indices(unit, start, stop), dtype=np.int64)
        if cfg["mode"] == "exhaustive":
            bits = ((idx[:, None] >> np.arange(nb)) & 1).astype(np.int64)
        else:
            ctx = SeedContext(cfg.seed, self.exp(cfg, unit), 0).substream(BITS_STREAM)
            pts = np.stack(np.meshgrid(idx, np.arange(nb), indexing="ij"), -1).reshape(-1, 2)
            bits = sample_weights(_FAIR, ctx, pts).reshape(idx.size, nb).astype(np.int64)
        blocks = bits.reshape(idx.size, d, mm)
        sums = blocks.sum(axis=2)
        Z = start_from_sums(sums, m)
        moved = np.where(blocks == 0, sums[:, :, None] + 1, sums[:, :, None] - 1)
        move = np.abs(start_from_sums(moved, m) - Z[:, :, None]).max(axis=(1, 2))
        return np.hstack([Z, move[:, None]]).astype(np.int64)

    def reduce(self, cfg, data):
        m, d = cfg["m"], cfg["d"]
        rows = data["Z"]
        total = rows.shape[0]
        mass = [np.bincount(rows[:, j], minlength=m + 1)[1:] / total for j in range(d)]
        worst = float(max(mm.max() for mm in mass))
        move = int(rows[:, d].max())
        bound = 4.0 / m
        records = [{"coord": j, "z": z + 1, "mass": float(p)} for j in range(d) for z, p in enumerate(mass[j])]
        v = {"flip_move": verdict(move <= 1, "every single bit flip moves Z by at most 1 in L1", value=move),
             "point_mass": verdict(worst <= bound, f"max point mass of each coordinate <= 4/m = {bound:g}",
                                   value=worst)}
        return Outcome({"m": m, "d": d, "samples": total, "max_flip_move": move,
                        "max_point_mass": worst, "bound": bound, "mode": cfg["mode"]}, v, records)

    def trace(self, cfg):
        # Z histogram of the first block of samples
        unit = self.units(cfg)[0]
        rows = self.compute(cfg, unit, 0, min(unit.count, unit.block))
        d = cfg["d"]
        return [{"coord": j, "z": z, "count": int(c)} for j in range(d)
                for z, c in enumerate(np.bincount(rows[:, j], minlength=cfg["m"] + 1)) if z > 0]


class PhiCheck(Scenario):
    name = "phi-check"
    help = "phi-coupling domination T_phi(0, x(v)) >= T(0, v)"
    default_dist = {"dist": "gaussian"}
    fields = {"N": Field(pos_int, 32), "d": Field(pos_int, 2), "n": Field(pos_int, 100)}

    def validate(self, cfg):
        if cfg["d"] < 2:
            raise ConfigError("field 'd': the phi construction needs d >= 2")

    def units(self, cfg):
        return [Unit("fields", cfg["n"], block=25)]

    def compute(self, cfg, unit, start, stop):
        rows = np.zeros((stop - start, 3), dtype=np.int64)
        for r, i in enumerate(range(*self.indices(unit, start, stop))):
            pc = build_phi(WeightField(cfg.dist, SeedContext(cfg.seed, self.exp(cfg, unit), i)),
                           cfg["N"], cfg["d"])
            rows[r] = len(pc.violations()), len(pc.off_segment()), len(pc.x_of)
        return rows

    def reduce(self, cfg, data):
        rows = data["fields"]
        bad, off, checked = (int(rows[:, k].sum()) for k in range(3))
        v = {"domination": verdict(bad == 0, "T_phi(0, x(v)) >= T(0, v) for every v", value=bad),
             "segment": verdict(off == 0, "x(v) on the segment from v to its e1-e2 image", value=off)}
        recs = [{"sample": i, "violations": int(a), "off_segment": int(b), "points": int(c)}
                for i, (a, b, c) in enumerate(rows)]
        return Outcome({"violations": bad, "off_segment": off, "points_checked": checked}, v, recs)

    def trace(self, cfg):
        pc = build_phi(WeightField(cfg.dist, SeedContext(cfg.seed, cfg.experiment_id, 0)), cfg["N"], cfg["d"])
        return pc.trace()


class ReflectCheck(Scenario):
    name = "reflect-check"
    help = "reflection coupling: domination, involution and multiset checks"
    default_dist = {"dist": "gaussian"}
    fields = {"a": Field(point, (0, 32)), "N": Field(pos_int, 64), "n": Field(pos_int, 100)}

    def units(self, cfg):
        return [Unit("fields", cfg["n"], block=25)]

    def compute(self, cfg, unit, start, stop):
        rows = np.zeros((stop - start, 5))
        for r, i in enumerate(range(*self.indices(unit, start, stop))):
            chk = check_reflection(WeightField(cfg.dist, SeedContext(cfg.seed, self.exp(cfg, unit), i)),
                                   cfg["a"], cfg["N"])
            rows[r] = chk.T_a, chk.T_b_reflected, chk.holds, chk.involution_ok, chk.multiset_ok
        return rows

    def reduce(self, cfg, data):
        rows = data["fields"]
        viol = int((rows[:, 2] == 0).sum())
        inv = int((rows[:, 3] == 0).sum())
        ms = int((rows[:, 4] == 0).sum())
        v = {"domination": verdict(viol == 0, "reflected T(b, Nu) >= T(a, Nu)", value=viol),
             "involution": verdict(inv == 0, "reflecting twice restores the field exactly", value=inv),
             "multiset": verdict(ms == 0, "reflection preserves the weight multiset", value=ms)}
        recs = [{"sample": i, "T_a": a, "T_b_reflected": b} for i, (a, b, *_) in enumerate(rows)]
        return Outcome({"violations": viol, "involution_failures": inv, "multiset_failures": ms,
                        "mean_margin": float((rows[:, 1] - rows[:, 0]).mean())}, v, recs)

    def trace(self, cfg):
        chk = check_reflection(WeightField(cfg.dist, SeedContext(cfg.seed, cfg.experiment_id, 0)),
                               cfg["a"], cfg["N"])
        rec = chk.spec.to_dict()
        rec.update(T_a=chk.T_a, T_b_reflected=chk.T_b_reflected)
        return [rec]


class EmbedCheck(Scenario):
    name = "embed-check"
    help = "ordered passage times against the transported space-time field"
    default_dist = {"dist": "gaussian"}
    fields = {
        "dims": Field(int_list, (2, 3)),
        "max_norm": Field(pos_int, 12),
        "n": Field(pos_int, 100),
    }

    def units(self, cfg):
        return [Unit(f"d{d}", cfg["n"], d, block=50) for d in cfg["dims"]]

    def compute(self, cfg, unit, start, stop):
        d = unit.exp
        exp = self.exp(cfg, unit)
        rows = np.full((stop - start, 5), np.nan)
        for r, i in enumerate(range(*self.indices(unit, start, stop))):
            rng = np.random.default_rng([cfg.seed, exp, i, 0xE3B])
            L = int(rng.integers(1, cfg["max_norm"] + 1))
            a = tuple(int(c) for c in rng.multinomial(L, np.full(d, 1.0 / d)))
            fld = WeightField(cfg.dist, SeedContext(cfg.seed, exp, i))
            c = embedding_comparison(fld, a)
            rows[r, :3] = c.ordered, c.restricted, c.full
            if d == 2:
                rows[r, 3] = ground_state(fld, L, GraphKind.ORDERED, d=2)[0]
                rows[r, 4] = ground_state(TransportedField(fld), L, GraphKind.SPACETIME, d=2)[0]
        return rows

    def reduce(self, cfg, data):
        exact = dom = gs = 0
        total_gs = 0
        for rows in data.values():
            exact += int((rows[:, 0] != rows[:, 1]).sum())
            dom += int((rows[:, 2] < rows[:, 0]).sum())
            has = ~np.isnan(rows[:, 3])
            total_gs += int(has.sum())
            gs += int((rows[has, 3] != rows[has, 4]).sum())
        v = {"restricted_exact": verdict(exact == 0, "T(0, a) equals the restricted embedded sweep exactly",
                                         value=exact),
             "full_dominates": verdict(dom == 0, "unrestricted embedded T >= T(0, a)", value=dom),
             "ground_states": verdict(gs == 0 if total_gs else None,
                                      "d = 2 ground states equal under transport", value=gs)}
        recs = [{"unit": k, "n": int(r.shape[0]), "max_gap_full": float((r[:, 2] - r[:, 0]).max())}
                for k, r in data.items()]
        return Outcome({"restricted_mismatches": exact, "domination_failures": dom,
                        "ground_state_mismatches": gs}, v, recs)


SCENARIOS = {s.name: s for s in (
    OracleCheck(), InfluenceMapScenario(), VarianceScan(), Tail(), Quantiles(), GEstimate(), Concavity(),
    Plateau(), Wandering(), Polymer(), ShiftScan(), ClampCheck(), RatioScan(), ZStartCheck(), PhiCheck(),
    ReflectCheck(), EmbedCheck())}
