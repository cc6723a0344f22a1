"""Run reports: delimited metrics, trace files and rendered figures.

Every experiment run produces, inside its output directory:

* ``metrics.csv``: one row per metrics cell, header included; byte
  identical across reruns of the same config+seed;
* ``report.json``: the resolved config echo, metrics, artifact manifest,
  wall-clock duration and library version (sufficient to re-run);
* ``traces/``: step-indexed CSV files, one per run, where applicable;
* ``figures/``: matplotlib renderings of the headline results.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import UsageError

__version__ = "0.1.0"

__all__ = ["RunReport", "write_metrics_csv", "write_trace", "compare_report"]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(path: Path, rows: list[dict]) -> Path:
    """Write metric rows as comma-separated text with a header row."""
    if not rows:
        raise UsageError("no metric rows to write")
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(row.get(f, "")) for f in fields])
    return path


def write_trace(path: Path, columns: dict) -> Path:
    """Write step-indexed per-run series as CSV (step + named columns)."""
    names = list(columns.keys())
    length = len(next(iter(columns.values())))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step"] + names)
        for i in range(length):
            writer.writerow([i] + [_fmt(columns[n][i]) for n in names])
    return path


@dataclass
class RunReport:
    """Everything needed to identify, inspect and re-run an experiment."""

    kind: str
    config: dict
    metrics: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    duration_seconds: float = 0.0
    version: str = __version__

    def add_artifact(self, path: Path, role: str):
        self.artifacts.append({"path": str(path), "role": role})

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "version": self.version,
            "config": self.config,
            "metrics": self.metrics,
            "artifacts": self.artifacts,
            "duration_seconds": self.duration_seconds,
        }

    def save(self, out_dir: Path) -> Path:
        path = Path(out_dir) / "report.json"
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, path) -> "RunReport":
        path = Path(path)
        if path.is_dir():
            path = path / "report.json"
        with open(path) as fh:
            doc = json.load(fh)
        return cls(
            kind=doc["kind"],
            config=doc["config"],
            metrics=doc["metrics"],
            artifacts=doc["artifacts"],
            duration_seconds=doc["duration_seconds"],
            version=doc["version"],
        )


def compare_report(report_a: RunReport, report_b: RunReport,
                   tolerance: float = 0.0) -> dict:
    """Per-metric deltas between two reports of the same experiment kind.

    Metric rows are matched by their non-numeric fields; numeric fields
    whose absolute delta exceeds the tolerance are flagged.
    """
    if report_a.kind != report_b.kind:
        raise UsageError(
            f"cannot compare kinds {report_a.kind!r} and {report_b.kind!r}"
        )

    def key(row):
        return tuple(
            (k, v) for k, v in sorted(row.items())
            if not isinstance(v, (int, float)) or isinstance(v, bool)
        )

    rows_b = {key(r): r for r in report_b.metrics}
    deltas, flagged = [], []
    for row_a in report_a.metrics:
        row_b = rows_b.get(key(row_a))
        if row_b is None:
            flagged.append({"row": dict(key(row_a)), "issue": "missing in b"})
            continue
        for name, va in row_a.items():
            if isinstance(va, bool) or not isinstance(va, (int, float)):
                continue
            delta = float(row_b[name]) - float(va)
            entry = {"row": dict(key(row_a)), "metric": name, "delta": delta}
            deltas.append(entry)
            if abs(delta) > tolerance:
                flagged.append(entry)
    return {"deltas": deltas, "flagged": flagged, "tolerance": tolerance}


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def render_bar_figure(path: Path, labels, series: dict, errors: dict | None = None,
                      title: str = "", ylabel: str = ""):
    """Grouped bar chart with optional error bars, rendered to file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    fig, ax = plt.subplots(figsize=(7, 4))
    x = np.arange(len(labels))
    width = 0.8 / max(1, len(series))
    for i, (name, values) in enumerate(series.items()):
        err = errors.get(name) if errors else None
        ax.bar(x + i * width, values, width, label=name, yerr=err, capsize=3)
    ax.set_xticks(x + width * (len(series) - 1) / 2)
    ax.set_xticklabels(labels)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_line_figure(path: Path, series: dict, title: str = "",
                       xlabel: str = "step", ylabel: str = ""):
    """Line plot of one or more named series, rendered to file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for name, values in series.items():
        ax.plot(values, label=name, linewidth=1.0)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
