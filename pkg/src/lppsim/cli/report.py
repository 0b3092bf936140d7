"""Report records and bit-stable serialization."""
from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
PASS, FAIL, NA = "pass", "fail", "n/a"


def verdict(ok: bool | None, rule: str, **values) -> dict:
    status = NA if ok is None else (PASS if ok else FAIL)
    out = {"status": status, "rule": rule}
    out.update(values)
    return out


@dataclass
class ReportRecord:
    scenario: str
    config: dict
    build: str
    metrics: dict
    verdicts: dict
    records: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return all(v["status"] != FAIL for v in self.verdicts.values())

    def to_dict(self) -> dict:
        # timing is kept out so identical inputs give identical bytes
        return {"schema_version": SCHEMA_VERSION, "scenario": self.scenario,
                "config": self.config, "seed": self.config.get("seed"), "build": self.build,
                "metrics": self.metrics, "verdicts": self.verdicts, "all_pass": self.all_pass,
                "records": self.records}


def fmt_float(x: float) -> str:
    if math.isnan(x):
        return "null"
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = "%.12g" % x
    # keep a float marker so values round-trip as numbers of the same kind
    return s if any(c in s for c in ".en") else s + ".0"


def _scalar(v):
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def dumps(obj, indent: int = 1, _level: int = 0) -> str:
    """JSON with sorted keys and every float printed as %.12g."""
    obj = _scalar(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    if isinstance(obj, str):
        import json
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{dumps(str(k))}: {dumps(obj[k], indent, _level + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        parts = [dumps(v, indent, _level + 1) for v in obj]
        if all(not isinstance(_scalar(v), (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(parts) + "]"
        return "[\n" + ",\n".join(pad + p for p in parts) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _cell(v) -> str:
    v = _scalar(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fmt_float(v).strip('"').replace("null", "nan")
    if isinstance(v, (list, tuple)):
        return ";".join(_cell(x) for x in v)
    return str(v)


def to_csv(records: list) -> str:
    """One row per record; columns in order of first appearance."""
    cols: list = []
    for r in records:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in records:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def emit_report(record: ReportRecord, out_dir, fmt: str = "json") -> Path:
    """Write the report (and a timing sidecar); returns the report path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out / f"{record.scenario}.json"
        path.write_text(dumps(record.to_dict()) + "\n")
    elif fmt == "csv":
        path = out / f"{record.scenario}.csv"
        path.write_text(to_csv(record.records))
        (out / f"{record.scenario}.verdicts.json").write_text(
            dumps({"verdicts": record.verdicts, "all_pass": record.all_pass,
                   "metrics": record.metrics, "config": record.config,
                   "build": record.build, "schema_version": SCHEMA_VERSION}) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    (out / f"{record.scenario}.timing.json").write_text(dumps(record.timing) + "\n")
    return path


def build_id() -> str:
    """Hash of the package sources, in the spirit of a commit id."""
    root = Path(__file__).resolve().parent.parent
    h = hashlib.sha1()
    for p in sorted(root.rglob("*.py")):
        h.update(str(p.relative_to(root)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:12]
