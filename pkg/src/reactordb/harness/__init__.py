"""Experiment driver for the SmartMart benchmark."""

from .driver import EpochStats, PointResult, measure_epochs, run_point, worker_loop
from .report import COLUMNS, emit_csv
from .scenarios import SCENARIOS, run_scenario
from .verify import VerifyReport, verify_serializability
from .workload import WorkloadConfig, ZipfSampler, parse_workload, zipf_sample

__all__ = ["COLUMNS", "EpochStats", "PointResult", "SCENARIOS", "VerifyReport", "WorkloadConfig",
           "ZipfSampler", "emit_csv", "measure_epochs", "parse_workload", "run_point", "run_scenario",
           "verify_serializability", "worker_loop", "zipf_sample"]
