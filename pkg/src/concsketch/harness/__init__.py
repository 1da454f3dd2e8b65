"""Benchmark driver, history recording, relaxation checkers and the CLI."""

from .bench import BenchReport, bench_run
from .checker import Verdict, check_relaxation_quantiles, check_relaxation_theta
from .history import Event, HistoryLog, record_history, run_script
from .report import report_emit, report_read

__all__ = [
    "BenchReport",
    "Event",
    "HistoryLog",
    "Verdict",
    "bench_run",
    "check_relaxation_quantiles",
    "check_relaxation_theta",
    "record_history",
    "report_emit",
    "report_read",
    "run_script",
]
