"""PNG figures for run directories (headless matplotlib)."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (4.8, 3.4),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.markersize": 5,
    "legend.frameon": False,
}

# no timestamps or versions in the PNG text chunks
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return Path(path)


def plot_study(name: str, study: dict, path) -> Path:
    """Log-log refinement plot with a reference line at the fitted slope."""
    x, y = study["refinement"], study["residual"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(x, y, "o-", label=study.get("label", name))
        slope = study.get("slope")
        if slope is not None and len(x) > 1:
            ref = [y[-1] * (xi / x[-1]) ** slope for xi in x]
            ax.loglog(x, ref, "--", color="0.5", label=f"slope {slope:.2f}")
        ax.set_xlabel("refinement")
        ax.set_ylabel("residual")
        ax.set_title(name)
        ax.legend()
        return _save(fig, path)


def plot_mass(csv_path, path) -> Path:
    """Mass curve against the pushforward bound (and the reference curve when present)."""
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    t = [float(r["t"]) for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(t, [float(r["mass"]) for r in rows], label="mass")
        ax.plot(t, [float(r["bound"]) for r in rows], "--", label="bound")
        if rows and "reference" in rows[0]:
            ax.plot(t, [float(r["reference"]) for r in rows], ":", label="reference")
        ax.set_xlabel("t")
        ax.set_ylabel("mass")
        ax.legend()
        return _save(fig, path)


def plot_checks(checks: list, path) -> Path:
    """Margin of every check on a log scale (value over tolerance, or its inverse for lower bounds)."""
    names, margins, colors = [], [], []
    for name, c in checks:
        v, tol = c.get("value"), c.get("tolerance")
        if v is None or tol is None or c["relation"] == "band":
            continue
        if c["relation"] == "le":
            m = abs(v) / tol if tol > 0 else float("inf")
        else:
            m = tol / abs(v) if v != 0 else float("inf")
        if not (m > 0 and m < float("inf")):
            continue
        names.append(name)
        margins.append(m)
        colors.append("tab:blue" if c["pass"] else "tab:red")
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 0.25 * len(names) + 1.2))
        ax.barh(range(len(names)), margins, color=colors)
        ax.set_xscale("log")
        ax.axvline(1.0, color="k", lw=0.8)
        ax.set_yticks(range(len(names)))
        ax.set_yticklabels(names, fontsize=7)
        ax.set_xlabel("value / threshold (pass left of 1)")
        return _save(fig, path)
