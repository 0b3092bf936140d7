"""Sharded, resumable execution.

Each unit of a scenario is cut into blocks on a fixed grid of sample
indices (intersected with the shard's range). Finished blocks are saved
as ``.npy`` files and recorded in an append-only ``manifest.jsonl``; a
block already in the manifest is never recomputed. Merging concatenates
blocks in index order, so the report does not depend on how the work was
split.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .report import ReportRecord, build_id, emit_report
from .scenarios import SCENARIOS, Unit

MANIFEST = "manifest.jsonl"


@dataclass(frozen=True)
class Task:
    unit: Unit
    start: int
    stop: int

    @property
    def key(self) -> tuple:
        return self.unit.name, self.start, self.stop


class Manifest:
    """Append-only log of finished blocks."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.path = self.dir / MANIFEST

    def entries(self, config_hash: str) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        for line in self.path.read_text().splitlines():
            if not line.strip():
                continue
            try:
                e = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn write from an interrupted run
            if e.get("config_hash") == config_hash and e.get("status") == "done":
                if (self.dir / e["file"]).exists():
                    out.append(e)
        return out

    def done(self, config_hash: str) -> set:
        return {(e["unit"], e["start"], e["stop"]) for e in self.entries(config_hash)}

    def append(self, entry: dict) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        line = json.dumps(entry, sort_keys=True) + "\n"
        with open(self.path, "a+b") as fh:
            # a killed writer can leave a partial line behind; start a fresh one
            if fh.tell() > 0:
                fh.seek(-1, 2)
                if fh.read(1) != b"\n":
                    line = "\n" + line
            fh.write(line.encode())


def shard_range(count: int, shard: tuple) -> tuple[int, int]:
    k, m = shard
    return count * k // m, count * (k + 1) // m


def plan(cfg: ExperimentConfig, shard: tuple | None = None) -> list[Task]:
    scen = SCENARIOS[cfg.scenario]
    shard = cfg.shard if shard is None else shard
    tasks = []
    for unit in scen.units(cfg):
        lo, hi = shard_range(unit.count, shard)
        a = lo
        while a < hi:
            b = min(hi, (a // unit.block + 1) * unit.block)
            tasks.append(Task(unit, a, b))
            a = b
    return tasks


def _gaps(start: int, stop: int, spans: list) -> list:
    """Parts of [start, stop) not covered by any of ``spans``."""
    out, pos = [], start
    for a, b in sorted(spans):
        if b <= pos or a >= stop:
            continue
        if a > pos:
            out.append((pos, a))
        pos = max(pos, b)
        if pos >= stop:
            break
    if pos < stop:
        out.append((pos, stop))
    return out


def _block_file(cfg_hash: str, task: Task) -> str:
    return f"blocks/{cfg_hash[:16]}/{task.unit.name}_{task.start}_{task.stop}.npy"


def _compute(cfg: ExperimentConfig, task: Task):
    t0 = time.perf_counter()
    rows = SCENARIOS[cfg.scenario].compute(cfg, task.unit, task.start, task.stop)
    return task, np.asarray(rows), time.perf_counter() - t0


def execute(cfg: ExperimentConfig, shard: tuple | None = None, workers: int | None = None,
            log=None) -> dict:
    """Compute every missing block of this shard; returns timing info."""
    cfg_hash = cfg.config_hash()
    man = Manifest(cfg.out)
    covered: dict = {}
    for e in man.entries(cfg_hash):
        covered.setdefault(e["unit"], []).append((e["start"], e["stop"]))
    todo, skipped = [], 0
    for t in plan(cfg, shard):
        # blocks written under another shard layout count as done
        gaps = _gaps(t.start, t.stop, covered.get(t.unit.name, []))
        skipped += not gaps
        todo += [Task(t.unit, a, b) for a, b in gaps]
    workers = cfg.workers if workers is None else workers
    timing = {"blocks_computed": 0, "blocks_skipped": skipped, "compute_s": 0.0}

    def store(task, rows, dt):
        rel = _block_file(cfg_hash, task)
        path = Path(cfg.out) / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.stem + ".tmp.npy")
        np.save(tmp, rows)
        tmp.replace(path)
        man.append({"config_hash": cfg_hash, "scenario": cfg.scenario, "unit": task.unit.name,
                    "start": task.start, "stop": task.stop, "file": rel, "status": "done"})
        timing["blocks_computed"] += 1
        timing["compute_s"] += dt
        if log:
            log(f"{task.unit.name} [{task.start}, {task.stop}) {dt:.2f}s")

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(workers) as pool:
            for res in pool.map(_compute, [cfg] * len(todo), todo):
                store(*res)
    else:
        for t in todo:
            store(*_compute(cfg, t))
    return timing


class IncompleteRun(RuntimeError):
    pass


def collect(cfg: ExperimentConfig) -> dict:
    """Per-unit arrays assembled from finished blocks in index order."""
    cfg_hash = cfg.config_hash()
    entries = Manifest(cfg.out).entries(cfg_hash)
    data = {}
    for unit in SCENARIOS[cfg.scenario].units(cfg):
        mine = [e for e in entries if e["unit"] == unit.name]
        parts, pos = [], 0
        while pos < unit.count:
            # blocks from different shard layouts may overlap; rows are a
            # function of the sample index, so any covering block will do
            live = [e for e in mine if e["start"] <= pos < e["stop"]]
            if not live:
                raise IncompleteRun(f"unit {unit.name!r}: samples from {pos} on are missing")
            e = max(live, key=lambda e: (e["stop"], -e["start"]))
            rows = np.load(Path(cfg.out) / e["file"])
            parts.append(rows[pos - e["start"]:])
            pos = e["stop"]
        data[unit.name] = np.concatenate(parts, axis=0) if parts else np.empty(0)
    return data


def reduce(cfg: ExperimentConfig, timing: dict | None = None) -> ReportRecord:
    scen = SCENARIOS[cfg.scenario]
    t0 = time.perf_counter()
    res = scen.reduce(cfg, collect(cfg))
    timing = dict(timing or {})
    timing["reduce_s"] = time.perf_counter() - t0
    return ReportRecord(cfg.scenario, cfg.echo(), build_id(), res.metrics, res.verdicts,
                        res.records, timing)


def write_trace(cfg: ExperimentConfig) -> Path | None:
    rows = SCENARIOS[cfg.scenario].trace(cfg)
    if rows is None:
        return None
    from .report import dumps
    path = Path(cfg.out) / f"{cfg.scenario}.trace.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps({"scenario": cfg.scenario, "config": cfg.echo(), "trace": rows}) + "\n")
    return path


def run_scenario(cfg: ExperimentConfig, log=None) -> ReportRecord | None:
    """Run this config's shard; with a single shard also reduce and emit the report."""
    t0 = time.perf_counter()
    timing = execute(cfg, log=log)
    if cfg.trace:
        write_trace(cfg)
    if cfg.shard[1] > 1:
        return None
    rec = reduce(cfg, timing)
    rec.timing["total_s"] = time.perf_counter() - t0
    emit_report(rec, cfg.out, cfg.format)
    return rec


def merge(cfg: ExperimentConfig) -> ReportRecord:
    """Reduce blocks written by any set of shards into the final report."""
    rec = reduce(cfg)
    emit_report(rec, cfg.out, cfg.format)
    return rec
