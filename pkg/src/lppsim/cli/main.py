"""``lppsim`` command line entry point."""
from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError, LppError
from .config import build_config, parse_value, tomllib
from .report import FAIL
from .runner import IncompleteRun, merge, run_scenario
from .scenarios import SCENARIOS

log = logging.getLogger("lppsim")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="TOML experiment config")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--shard", metavar="K/M", help="run shard K of M (0-based)")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--trace", action="store_true", default=None, help="export coupling traces")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field (TOML value syntax)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lppsim", description="Last-passage percolation experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, scen in sorted(SCENARIOS.items()):
        _add_common(sub.add_parser(name, help=scen.help))
    m = sub.add_parser("merge", help="reduce blocks from all shards into the final report")
    _add_common(m)
    return parser


def _overrides(args) -> dict:
    out = {"seed": args.seed, "shard": args.shard, "out": args.out, "format": args.format,
           "trace": args.trace, "workers": args.workers}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        k = k.strip()
        if k.startswith("dist."):
            out.setdefault("dist", {})[k[5:]] = parse_value(v)
        else:
            out[k] = parse_value(v)
    return out


def _config(args):
    over = _overrides(args)
    dist_over = over.pop("dist", None)
    raw: dict = {}
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config syntax error: {exc}") from None
    elif args.command == "merge":
        raise ConfigError("merge needs --config")
    if args.command != "merge":
        if raw.get("scenario", args.command) != args.command:
            raise ConfigError(f"config is for scenario {raw['scenario']!r}, not {args.command!r}")
        raw["scenario"] = args.command
    if dist_over:
        base = raw.get("dist", {})
        if not isinstance(base, dict):
            raise ConfigError("dist.* overrides need a single [dist] table")
        raw["dist"] = {**base, **dist_over}
    return build_config(raw, over)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        if args.command == "merge":
            rec = merge(cfg)
        else:
            rec = run_scenario(cfg, log=log.info)
    except (LppError, IncompleteRun, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if rec is None:
        k, m = cfg.shard
        print(f"{cfg.scenario}: shard {k}/{m} done; run 'lppsim merge' once all shards finish")
        return 0
    for name, v in sorted(rec.verdicts.items()):
        print(f"{rec.scenario} {name}: {v['status']} ({v['rule']})")
    return 1 if any(v["status"] == FAIL for v in rec.verdicts.values()) else 0


if __name__ == "__main__":
    sys.exit(main())
