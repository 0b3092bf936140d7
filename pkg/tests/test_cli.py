import json
import subprocess
import sys
from pathlib import Path

import pytest

from lppsim.cli.config import build_config, parse_config
from lppsim.cli.main import build_parser, main
from lppsim.cli.report import ReportRecord, dumps, emit_report, to_csv, verdict
from lppsim.cli.runner import IncompleteRun, Manifest, execute, merge, plan, run_scenario
from lppsim.cli.scenarios import SCENARIOS
from lppsim.errors import ConfigError

MINIMAL = """
scenario = "variance-scan"
seed = 3
Ns = [8, 16]
n = 300

[dist]
dist = "gaussian"
"""

SUBCOMMANDS = ["oracle-check", "variance-scan", "influence-map", "tail", "quantiles", "g-estimate",
               "concavity", "plateau", "wandering", "polymer", "shift-scan", "clamp-check",
               "ratio-scan", "z-start-check", "phi-check", "reflect-check"]


def cfg_at(tmp_path, text=MINIMAL, **over):
    return parse_config(text, {"out": str(tmp_path), **over})


class TestConfig:
    def test_minimal(self):
        cfg = parse_config(MINIMAL)
        assert cfg.scenario == "variance-scan" and cfg["Ns"] == (8, 16)
        assert cfg.dist.name == "gaussian" and cfg["direction"] == (1, 1)
        assert cfg.echo()["params"]["n"] == 300

    def test_negative_n_names_field(self):
        with pytest.raises(ConfigError, match="'n'"):
            parse_config(MINIMAL.replace("n = 300", "n = -5"))

    def test_unknown_distribution_lists_variants(self):
        with pytest.raises(ConfigError) as exc:
            parse_config(MINIMAL.replace('"gaussian"', '"lognormal"'))
        for name in ("bernoulli", "gamma", "gaussian", "geometric", "pointmass", "uniform"):
            assert name in str(exc.value)

    def test_unknown_field(self):
        with pytest.raises(ConfigError, match="bogus"):
            parse_config(MINIMAL + "\n", {"bogus": 1})

    def test_missing_field(self):
        with pytest.raises(ConfigError, match="'Ns'"):
            parse_config(MINIMAL.replace("Ns = [8, 16]", ""))

    def test_unknown_scenario(self):
        with pytest.raises(ConfigError, match="oracle-check"):
            build_config({"scenario": "nope"})

    def test_syntax_error_has_line(self):
        with pytest.raises(ConfigError, match="line 3"):
            parse_config('scenario = "tail"\nseed = 1\nx = [1,,2]\n')

    def test_shard_spec(self):
        with pytest.raises(ConfigError):
            parse_config(MINIMAL, {"shard": "2/2"})
        assert parse_config(MINIMAL, {"shard": "1/4"}).shard == (1, 4)

    def test_hash_ignores_output_fields(self, tmp_path):
        a = cfg_at(tmp_path / "a")
        b = cfg_at(tmp_path / "b", shard="1/2", format="csv")
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != parse_config(MINIMAL.replace("seed = 3", "seed = 4")).config_hash()

    def test_default_dist(self):
        cfg = parse_config('scenario = "plateau"')
        assert cfg.dist.name == "bernoulli" and cfg.dist.params == (0.95,)


class TestReport:
    def record(self):
        return ReportRecord("demo", {"seed": 1}, "abc", {"x": 0.1 + 0.2, "big": 1e300, "nan": float("nan"),
                                                          "inf": float("inf"), "n": 3, "f": 2.0},
                            {"ok": verdict(True, "rule")}, [{"a": 1, "b": 0.5}, {"a": 2, "c": [1, 2]}],
                            {"total_s": 1.0})

    def test_float_format(self):
        text = dumps({"b": 0.30000000000000004, "a": 2.0, "c": 1e-20})
        assert text.index('"a"') < text.index('"b"')
        assert "0.3," in text and "2.0" in text and "1e-20" in text

    def test_byte_identical(self, tmp_path):
        p1 = emit_report(self.record(), tmp_path / "1")
        p2 = emit_report(self.record(), tmp_path / "2")
        assert p1.read_bytes() == p2.read_bytes()

    def test_json_round_trip(self, tmp_path):
        text = emit_report(self.record(), tmp_path).read_text()
        data = json.loads(text)
        assert data["schema_version"] == 1 and data["all_pass"] is True
        assert dumps(data) + "\n" == text

    def test_csv_rows(self, tmp_path):
        rec = self.record()
        path = emit_report(rec, tmp_path, "csv")
        lines = path.read_text().strip().splitlines()
        assert len(lines) == len(rec.records) + 1
        assert lines[0] == "a,b,c" and lines[2] == "2,,1;2"
        assert (tmp_path / "demo.verdicts.json").exists()
        assert (tmp_path / "demo.timing.json").exists()
        assert to_csv([]) == "\n"


class TestRunner:
    def test_plan_blocks_cover_range(self, tmp_path):
        cfg = cfg_at(tmp_path)
        for m in (1, 2, 3):
            tasks = [t for k in range(m) for t in plan(cfg, (k, m))]
            for unit in SCENARIOS[cfg.scenario].units(cfg):
                spans = sorted((t.start, t.stop) for t in tasks if t.unit == unit)
                assert spans[0][0] == 0 and spans[-1][1] == unit.count
                assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))

    def test_shards_merge_identically(self, tmp_path):
        ref = run_scenario(cfg_at(tmp_path / "ref"))
        ref_bytes = (tmp_path / "ref" / "variance-scan.json").read_bytes()
        for M in (2, 4):
            out = tmp_path / f"m{M}"
            for k in range(M):
                assert run_scenario(cfg_at(out, shard=f"{k}/{M}")) is None
            rec = merge(cfg_at(out))
            assert (out / "variance-scan.json").read_bytes() == ref_bytes
            assert rec.metrics == ref.metrics

    def test_resume_is_noop(self, tmp_path):
        cfg = cfg_at(tmp_path)
        run_scenario(cfg)
        first = (tmp_path / "variance-scan.json").read_bytes()
        lines = Manifest(tmp_path).path.read_text().splitlines()
        timing = execute(cfg)
        assert timing["blocks_computed"] == 0 and timing["blocks_skipped"] == len(lines)
        run_scenario(cfg)
        assert (tmp_path / "variance-scan.json").read_bytes() == first
        assert Manifest(tmp_path).path.read_text().splitlines() == lines

    def test_interrupted_run_resumes(self, tmp_path):
        ref_dir = tmp_path / "ref"
        run_scenario(cfg_at(ref_dir))
        out = tmp_path / "run"
        run_scenario(cfg_at(out, shard="0/2"))
        with pytest.raises(IncompleteRun):
            merge(cfg_at(out))
        # a torn manifest line from a killed process is ignored
        with open(Manifest(out).path, "a") as fh:
            fh.write('{"config_hash": "tru')
        timing = execute(cfg_at(out))
        assert timing["blocks_computed"] == 2  # the second half of each unit
        merge(cfg_at(out))
        assert (out / "variance-scan.json").read_bytes() == (ref_dir / "variance-scan.json").read_bytes()

    def test_workers_do_not_change_output(self, tmp_path):
        run_scenario(cfg_at(tmp_path / "a"))
        run_scenario(cfg_at(tmp_path / "b", workers=2))
        assert ((tmp_path / "a" / "variance-scan.json").read_bytes()
                == (tmp_path / "b" / "variance-scan.json").read_bytes())

    def test_other_config_in_same_dir(self, tmp_path):
        run_scenario(cfg_at(tmp_path))
        other = parse_config(MINIMAL.replace("seed = 3", "seed = 5"), {"out": str(tmp_path)})
        assert execute(other)["blocks_skipped"] == 0


class TestMain:
    def test_every_subcommand_exists(self):
        parser = build_parser()
        sub = next(a for a in parser._actions if a.dest == "command")
        assert set(SUBCOMMANDS) <= set(sub.choices)

    def test_oracle_check_passes(self, tmp_path, capsys):
        code = main(["oracle-check", "--out", str(tmp_path), "--set", "n=20", "--set", "dims=[2]"])
        assert code == 0
        assert "oracle_equal: pass" in capsys.readouterr().out
        data = json.loads((tmp_path / "oracle-check.json").read_text())
        assert data["metrics"]["max_abs_diff"] <= 1e-12

    def test_failing_verdict_exit_code(self, tmp_path):
        args = ["g-estimate", "--out", str(tmp_path), "--set", "direction=[0.5, 0.5]", "--set", "N=8",
                "--set", "n=10", "--set", "dist.dist='pointmass'", "--set", "dist.c=1.0",
                "--set", "expect_min=2.0"]
        assert main(args) == 1

    def test_config_errors_exit_2(self, tmp_path, capsys):
        assert main(["tail", "--out", str(tmp_path), "--set", "dist.dist='gaussian'"]) == 2
        assert "'x'" in capsys.readouterr().err
        cfg = tmp_path / "c.toml"
        cfg.write_text(MINIMAL)
        assert main(["tail", "--config", str(cfg)]) != 0

    def test_config_file_and_overrides(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text(MINIMAL)
        out = tmp_path / "o"
        assert main(["variance-scan", "--config", str(cfg), "--out", str(out), "--seed", "9",
                     "--format", "csv"]) == 0
        verdicts = json.loads((out / "variance-scan.verdicts.json").read_text())
        assert verdicts["config"]["seed"] == 9
        rows = (out / "variance-scan.csv").read_text().strip().splitlines()
        assert len(rows) == 3

    def test_shard_then_merge(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text(MINIMAL)
        out = str(tmp_path / "o")
        for k in range(2):
            assert main(["variance-scan", "--config", str(cfg), "--out", out, "--shard", f"{k}/2"]) == 0
        assert main(["merge", "--config", str(cfg), "--out", out]) == 0
        assert (Path(out) / "variance-scan.json").exists()

    def test_trace_export(self, tmp_path):
        assert main(["phi-check", "--out", str(tmp_path), "--trace", "--set", "N=4",
                     "--set", "n=2"]) == 0
        trace = json.loads((tmp_path / "phi-check.trace.json").read_text())
        assert trace["scenario"] == "phi-check" and trace["trace"]

    def test_module_entry_point(self, tmp_path):
        res = subprocess.run([sys.executable, "-m", "lppsim.cli", "z-start-check", "--out", str(tmp_path),
                              "--set", "m=4", "--set", "mode='exhaustive'"],
                             capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        assert "pass" in res.stdout
