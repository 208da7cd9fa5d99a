"""CSV and JSON campaign reports.

Numbers are rendered with 6 significant digits so that reruns produce
byte-identical files.  The only nondeterministic field is
``metadata.created`` in the JSON report.
"""

from __future__ import annotations

import csv
import io
import json
import time
from pathlib import Path

import numpy as np

from .campaign import CampaignSummary, RateSummary, RunResult
from .detector import FingerprintBoundary
from .errors import FormatError, WriteError

RUN_COLUMNS = ("rate", "run", "accuracy", "coverage", "nonfunctional", "seed")
SUMMARY_COLUMNS = ("rate", "cov_median", "cov_q1", "cov_q3", "cov_min", "cov_max", "acc_mean", "acc_std")
PLOT_COLUMNS = ("rate", "cov_median", "cov_q1", "cov_q3", "whisker_low", "whisker_high",
                "acc_mean", "acc_low", "acc_high")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return format(float(x), ".6g")


def run_row(r: RunResult) -> list[str]:
    return [fmt(r.rate), fmt(r.run_index), fmt(r.accuracy), fmt(r.coverage), fmt(bool(r.nonfunctional)),
            fmt(int(r.seed_used))]


def summary_row(s: RateSummary) -> list[str]:
    return [fmt(getattr(s, c)) for c in SUMMARY_COLUMNS]


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc


def _rendered(values: dict) -> dict:
    return {k: fmt(v) for k, v in values.items()}


def report_dict(results: list[RunResult], summary: CampaignSummary | None,
                boundary: FingerprintBoundary | None, created: str | None = None) -> dict:
    return {
        "metadata": {"created": created if created is not None else time.strftime("%Y-%m-%dT%H:%M:%S%z")},
        "boundary": None if boundary is None else _rendered(boundary.to_dict()),
        "runs": [dict(zip(RUN_COLUMNS, run_row(r))) for r in results],
        "summary": None if summary is None else {
            "baseline_accuracy": fmt(summary.baseline_accuracy),
            "fault_free_fpr": fmt(summary.fault_free_fpr),
            "rates": [dict(zip(SUMMARY_COLUMNS, summary_row(s))) for s in summary.rates],
        },
    }


def write_report(results: list[RunResult], summary: CampaignSummary | None, boundary: FingerprintBoundary | None,
                 path, format: str = "csv") -> list[Path]:
    """Write reports into directory ``path``.

    ``csv`` writes ``runs.csv`` and ``summary.csv``; ``json`` writes
    ``report.json`` holding the boundary, runs and summary.
    """
    out = Path(path)
    if format == "csv":
        runs = out / "runs.csv"
        _write(runs, _csv_text(RUN_COLUMNS, [run_row(r) for r in results]))
        written = [runs]
        if summary is not None:
            summ = out / "summary.csv"
            _write(summ, _csv_text(SUMMARY_COLUMNS, [summary_row(s) for s in summary.rates]))
            written.append(summ)
        return written
    if format == "json":
        target = out / "report.json"
        _write(target, json.dumps(report_dict(results, summary, boundary), indent=2) + "\n")
        return [target]
    raise FormatError(f"unknown report format {format!r}")


def read_runs_csv(path) -> list[RunResult]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != RUN_COLUMNS:
            raise FormatError(f"{path}: expected columns {','.join(RUN_COLUMNS)}")
        rates: list[float] = []
        out = []
        for row in reader:
            rate = float(row[0])
            if rate not in rates:
                rates.append(rate)
            out.append(RunResult(rate, int(row[1]), float(row[2]), float(row[3]), row[4] == "1", int(row[5]),
                                 rates.index(rate)))
    return out


def plot_rows(summary: CampaignSummary, results: list[RunResult]) -> list[list[str]]:
    """Box-plot data per rate: Tukey whiskers clipped to the observed range, accuracy mean +- std."""
    rows = []
    for s in summary.rates:
        cov = np.array([r.coverage for r in results if r.rate == s.rate])
        iqr = s.cov_q3 - s.cov_q1
        lo = cov[cov >= s.cov_q1 - 1.5 * iqr].min()
        hi = cov[cov <= s.cov_q3 + 1.5 * iqr].max()
        rows.append([fmt(v) for v in (s.rate, s.cov_median, s.cov_q1, s.cov_q3, lo, hi,
                                      s.acc_mean, s.acc_mean - s.acc_std, s.acc_mean + s.acc_std)])
    return rows


def write_plot_csv(summary: CampaignSummary, results: list[RunResult], path) -> Path:
    path = Path(path)
    _write(path, _csv_text(PLOT_COLUMNS, plot_rows(summary, results)))
    return path
