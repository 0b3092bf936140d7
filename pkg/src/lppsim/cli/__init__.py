"""Experiment runner: configs, scenarios, sharded execution and reports."""
from .config import ExperimentConfig, load_config, parse_config
from .report import ReportRecord, emit_report
from .runner import merge, run_scenario
from .scenarios import SCENARIOS

__all__ = ["ExperimentConfig", "load_config", "parse_config", "ReportRecord", "emit_report",
           "merge", "run_scenario", "SCENARIOS"]
