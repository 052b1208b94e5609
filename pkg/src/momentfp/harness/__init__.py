"""Baseline, experiment orchestration, reports and the command line."""
from .baseline import wmmse_static
from .config import ExperimentConfig, load_config
from .experiment import ExperimentReport, ReportRow, run_experiment
from .report import CSV_HEADER, emit_report, read_report_json

__all__ = ["wmmse_static", "ExperimentConfig", "load_config", "ExperimentReport", "ReportRow",
           "run_experiment", "CSV_HEADER", "emit_report", "read_report_json"]
