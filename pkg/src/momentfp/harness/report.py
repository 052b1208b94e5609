"""CSV and JSON output of experiment reports."""
from __future__ import annotations

import csv
import json
import os

from ..errors import PrecodingError
from .experiment import ExperimentReport

CSV_HEADER = ("sweep_param,sweep_value,algorithm,fhat_nats,mc_rate_nats,mc_ci99_nats,"
              "iters,iter_time_ms,seed")


class ReportIOError(PrecodingError, OSError):
    pass


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit_report(report: ExperimentReport, out_dir, formats=("csv", "json"), stem="report"):
    """Write ``<stem>.csv`` and/or ``<stem>.json`` into ``out_dir``; return the paths.

    Values are written at full precision; missing values (failed rows, timing
    off) are empty cells in the CSV and ``null`` in the JSON.
    """
    paths = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        if "csv" in formats:
            path = os.path.join(out_dir, stem + ".csv")
            with open(path, "w", newline="") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(CSV_HEADER.split(","))
                for r in report.rows:
                    w.writerow([_fmt(v) for v in (
                        r.sweep_param, r.sweep_value, r.algorithm, r.fhat_nats, r.mc_rate_nats,
                        r.mc_ci99_nats, r.iters, r.iter_time_ms, r.seed)])
            paths.append(path)
        if "json" in formats:
            path = os.path.join(out_dir, stem + ".json")
            with open(path, "w") as f:
                json.dump(report.to_dict(), f, indent=1, sort_keys=True)
                f.write("\n")
            paths.append(path)
    except OSError as e:
        raise ReportIOError(f"cannot write report to {e.filename or out_dir}: {e.strerror}") from e
    return paths


def read_report_json(path) -> ExperimentReport:
    with open(path) as f:
        return ExperimentReport.from_dict(json.load(f))
