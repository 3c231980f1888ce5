"""Render figures from slfvsim experiment artifacts.

Input is always a CSV written by the simulator CLI, with an exact header
per figure kind (see ``SCHEMAS``).  When the sibling ``<name>-summary.json``
file is present its ``provenance`` block becomes the figure's caption footer
and its ``summary`` block supplies reference values (theory lines, oracle
parameters).  Rendering is deterministic: fixed figure size, DPI, explicit
axis policy, and stripped writer metadata, so one CSV yields one image byte
stream under a fixed renderer version.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402
from scipy import stats  # noqa: E402

SCHEMAS = {
    "pu-linear": ("upsilon", "mean", "se", "replicates"),
    "pu-log": ("upsilon", "mean", "se", "replicates"),
    "drift-convergence": ("replicate", "drift_displacement",
                          "neutral_displacement"),
    "meeting-qq": ("replicate", "meeting_time", "met"),
    "nearby-slope": ("n", "replicate", "nearby_time"),
}

KINDS = tuple(sorted(SCHEMAS))

FIGSIZE = (6.4, 4.4)
DPI = 110


class SchemaError(Exception):
    """CSV header does not match the schema of the requested figure kind."""

    def __init__(self, kind: str, expected, found):
        self.kind = kind
        self.expected = tuple(expected)
        self.found = tuple(found)
        missing = [c for c in self.expected if c not in self.found]
        unexpected = [c for c in self.found if c not in self.expected]
        super().__init__(
            f"CSV header does not match the {kind!r} schema\n"
            f"  expected columns: {', '.join(self.expected)}\n"
            f"  found columns:    {', '.join(self.found) or '(none)'}\n"
            f"  missing:          {', '.join(missing) or '(none)'}\n"
            f"  unexpected:       {', '.join(unexpected) or '(none)'}"
        )


@dataclass(frozen=True)
class FigureJob:
    """One rendering request: input CSV, figure kind, output image path."""

    csv_path: Path
    kind: str
    out_path: Path

    def __post_init__(self) -> None:
        if self.kind not in SCHEMAS:
            raise ValueError(
                f"unknown figure kind {self.kind!r}; "
                f"choose from {', '.join(KINDS)}")


def load_table(csv_path: Path, kind: str) -> dict:
    """Read the CSV into numeric column arrays, validating the header."""
    expected = SCHEMAS[kind]
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(kind, expected, ()) from None
        if tuple(header) != expected:
            raise SchemaError(kind, expected, header)
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{csv_path} has no data rows")
    cols = np.asarray(rows, dtype=float).T
    return {name: cols[i] for i, name in enumerate(expected)}


def sidecar_summary(csv_path: Path) -> dict | None:
    """Parse the ``<name>-summary.json`` file next to the CSV, if present."""
    path = csv_path.with_name(csv_path.stem + "-summary.json")
    if not path.exists():
        return None
    return json.loads(path.read_text())


def _footer(sidecar: dict | None) -> str:
    prov = (sidecar or {}).get("provenance") or {}
    if not prov:
        return "provenance unavailable"
    parts = []
    for key in ("seed", "n", "alpha", "upsilon"):
        if key in prov:
            parts.append(f"{key}={prov[key]:g}" if isinstance(prov[key], float)
                         else f"{key}={prov[key]}")
    return "  ".join(parts) or "provenance unavailable"


def _new_figure(footer: str):
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    fig.text(0.01, 0.01, footer, fontsize=7, color="0.35", family="monospace")
    return fig, ax


def _pu_axes(ax, table, summary, log: bool) -> None:
    u = table["upsilon"]
    mean = table["mean"]
    se = table["se"]
    theory = (summary or {}).get("full_impact_drift_theory")
    if log:
        keep = (u > 0) & (mean > 0)
        ax.errorbar(u[keep], mean[keep], yerr=2.0 * se[keep], fmt="o-",
                    ms=4, lw=1, capsize=2, color="tab:blue")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_title("mean extremal ancestor displacement vs impact "
                     "(log-log)")
    else:
        ax.errorbar(u, mean, yerr=2.0 * se, fmt="o-", ms=4, lw=1, capsize=2,
                    color="tab:blue")
        ax.set_xlim(0.0, 1.05)
        ax.set_title("mean extremal ancestor displacement vs impact")
    if theory is not None:
        ax.axhline(theory, ls="--", lw=1, color="tab:red",
                   label=f"full-impact drift {theory:.4g}")
        at_one = np.isclose(u, 1.0)
        if at_one.any():
            ax.annotate(f"target {theory:.4g}",
                        xy=(1.0, float(mean[at_one][0])),
                        xytext=(-70, -15), textcoords="offset points",
                        fontsize=8, color="tab:red",
                        arrowprops={"arrowstyle": "->", "color": "tab:red"})
        ax.legend(loc="lower right", fontsize=8)
    ax.set_xlabel("impact")
    ax.set_ylabel("mean displacement at the horizon")


def _drift_axes(ax, table, summary) -> None:
    d = table["drift_displacement"]
    k = np.arange(1, d.size + 1, dtype=float)
    running = np.cumsum(d) / k
    ax.plot(k, running, lw=1, color="tab:blue", label="running drift estimate")
    theory = (summary or {}).get("zeta_theory")
    if theory is not None:
        ax.axhline(theory, ls="--", lw=1, color="tab:red",
                   label=f"theory {theory:.4g}")
    ax.set_xlabel("replicates")
    ax.set_ylabel("mean selective displacement per unit time")
    ax.set_title("drift estimate convergence")
    ax.legend(loc="upper right", fontsize=8)


def _meeting_axes(ax, table, summary) -> None:
    info = summary or {}
    needed = ("gap", "approach_drift", "gap_variance")
    if any(info.get(key) is None for key in needed):
        raise ValueError(
            "meeting-qq needs the run's summary JSON next to the CSV "
            f"(fields {', '.join(needed)}) to build oracle quantiles")
    gap = float(info["gap"])
    drift = float(info["approach_drift"])
    var = float(info["gap_variance"])
    met = table["met"] > 0.5
    times = np.sort(table["meeting_time"][met])
    if times.size == 0:
        raise ValueError("no met replicates in the CSV; nothing to plot")
    shape = gap * gap / var
    law = stats.invgauss(mu=(gap / drift) / shape, scale=shape)
    probs = (np.arange(1, times.size + 1) - 0.5) / times.size
    oracle = law.ppf(probs)
    ax.plot(oracle, times, ".", ms=3, color="tab:blue")
    lim = float(max(oracle[-1], times[-1])) * 1.05
    ax.plot([0.0, lim], [0.0, lim], ls="--", lw=1, color="tab:red",
            label="45-degree reference")
    ax.set_xlim(0.0, lim)
    ax.set_ylim(0.0, lim)
    ax.set_xlabel("first-passage oracle quantiles")
    ax.set_ylabel("empirical meeting-time quantiles")
    ax.set_title("meeting times vs inverse-Gaussian oracle")
    ax.legend(loc="lower right", fontsize=8)


def _nearby_axes(ax, table, summary) -> None:
    ns = np.unique(table["n"])
    if ns.size < 2:
        raise ValueError("nearby-slope needs at least two distinct n values")
    means = np.array([table["nearby_time"][table["n"] == n].mean()
                      for n in ns])
    slope, intercept = np.polyfit(np.log(ns), np.log(means), 1)
    ax.loglog(ns, means, "o", color="tab:blue", label="mean nearby time")
    ax.loglog(ns, np.exp(intercept) * ns ** slope, lw=1, color="tab:blue",
              ls="-", alpha=0.6, label=f"fit slope {slope:.3f}")
    ax.loglog(ns, means[0] * (ns / ns[0]) ** -0.5, ls="--", lw=1,
              color="tab:red", label="reference slope -1/2")
    ax.set_xlabel("n")
    ax.set_ylabel("mean nearby-regime time")
    ax.set_title("nearby-time scaling in n")
    ax.legend(loc="upper right", fontsize=8)


def build_figure(kind: str, table: dict, sidecar: dict | None):
    """Build the matplotlib figure for a parsed table; no file IO."""
    summary = (sidecar or {}).get("summary") or {}
    fig, ax = _new_figure(_footer(sidecar))
    try:
        if kind in ("pu-linear", "pu-log"):
            _pu_axes(ax, table, summary, log=(kind == "pu-log"))
        elif kind == "drift-convergence":
            _drift_axes(ax, table, summary)
        elif kind == "meeting-qq":
            _meeting_axes(ax, table, summary)
        elif kind == "nearby-slope":
            _nearby_axes(ax, table, summary)
        fig.subplots_adjust(left=0.12, right=0.97, top=0.92, bottom=0.16)
    except Exception:
        plt.close(fig)
        raise
    return fig


def render(job: FigureJob) -> Path:
    """Load, validate, draw and save one figure; returns the output path."""
    table = load_table(job.csv_path, job.kind)
    fig = build_figure(job.kind, table, sidecar_summary(job.csv_path))
    try:
        job.out_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(job.out_path, metadata={"Software": None})
    finally:
        plt.close(fig)
    return job.out_path
