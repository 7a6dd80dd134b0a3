"""Experiment reports: CSV, JSON lines, JSON and SVG figures."""
from __future__ import annotations

import csv
import json
import math
import os
import platform
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import scipy  # noqa: E402

from .errors import IoError  # noqa: E402

plt.rcParams["svg.hashsalt"] = "fracobstacle"


def versions() -> dict:
    from . import __version__
    return {"fracobstacle": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "matplotlib": matplotlib.__version__}


@dataclass
class ExperimentReport:
    command: str
    config: dict
    records: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> (columns, rows)
    figures: dict = field(default_factory=dict)  # name -> plot spec
    summary: dict = field(default_factory=dict)
    texts: dict = field(default_factory=dict)  # file name -> contents
    wall_clock: float = math.nan

    def to_dict(self):
        return {"command": self.command, "config": self.config, "summary": self.summary,
                "versions": versions(), "tables": sorted(self.tables), "figures": sorted(self.figures)}


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return v


def write_csv(path, columns, rows):
    """Header plus one line per row; an empty ``rows`` gives a header-only file."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row[c]) for c in columns])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def dumps(record) -> str:
    return json.dumps(_jsonable(record), sort_keys=True, allow_nan=True)


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(dumps(r) + "\n")


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def plot_traces(path, x, series: dict, xlabel: str, ylabel: str, title: str = "", logx=True,
                logy=False, bands: dict | None = None, reference: float | None = None):
    """Line plot with one marker per point of each series, saved as SVG."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for name, y in series.items():
        ax.plot(x, y, marker="o", label=name)
        if bands and name in bands:
            y = np.asarray(y, float)
            b = np.asarray(bands[name], float)
            ax.fill_between(x, y - b, y + b, alpha=0.2)
    if reference is not None and math.isfinite(reference):
        ax.axhline(reference, color="k", ls="--", lw=0.8, label="limit")
    if logx:
        ax.set_xscale("log", base=2)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1 or reference is not None:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(report: ExperimentReport, out_dir, formats=("csv", "jsonl", "svg")):
    """Write tables, run records, figures and ``report.json`` into ``out_dir``.

    Wall-clock time goes to ``timing.json`` so every other file is a pure
    function of the configuration.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
        written = []
        if "csv" in formats:
            for name, (columns, rows) in sorted(report.tables.items()):
                path = os.path.join(out_dir, f"{name}.csv")
                write_csv(path, columns, rows)
                written.append(path)
        if "jsonl" in formats:
            path = os.path.join(out_dir, "runs.jsonl")
            write_jsonl(path, report.records)
            written.append(path)
        if "svg" in formats:
            for name, spec in sorted(report.figures.items()):
                path = os.path.join(out_dir, f"{name}.svg")
                plot_traces(path, **spec)
                written.append(path)
        for name, text in sorted(report.texts.items()):
            path = os.path.join(out_dir, name)
            with open(path, "w") as fh:
                fh.write(text)
            written.append(path)
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as fh:
            fh.write(json.dumps(_jsonable(report.to_dict()), sort_keys=True, indent=2, allow_nan=True) + "\n")
        written.append(path)
        with open(os.path.join(out_dir, "timing.json"), "w") as fh:
            json.dump({"wall_clock_s": report.wall_clock}, fh)
        return written
    except OSError as err:
        raise IoError(f"cannot write report to {out_dir}: {err}") from err
