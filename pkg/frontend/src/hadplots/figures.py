"""Histogram-plus-theory-curve figures from comparison run directories.

Consumes only the documented run artifacts: histogram.csv
(left,right,count,density), density.csv (x,pdf,cdf) and report.json.  No
science is recomputed here; every number drawn traces back to a file field.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

REQUIRED_FILES = ("histogram.csv", "density.csv", "report.json")
PNG_METADATA = {"Software": "hadspec-plots"}

BAR_COLOR = "#9ec9e2"
CURVE_COLOR = "#c23b22"
ATOM_COLOR = "#2a6f97"


class RenderError(ValueError):
    """Missing or malformed run artifact; the message names the file."""


@dataclass(frozen=True)
class FigureSpec:
    """One panel: a run directory plus presentation choices."""

    run_dir: Path
    title: str | None = None
    out_path: Path | None = None
    y_limit: float | None = None  # None means auto
    atom_marker: str = "stem"     # "stem" or "off"

    def resolved_out(self) -> Path:
        return self.out_path if self.out_path else Path(self.run_dir) / "figure.png"


def _check_run_dir(run_dir: Path) -> None:
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise RenderError(f"run directory not found: {run_dir}")
    for name in REQUIRED_FILES:
        if not (run_dir / name).is_file():
            raise RenderError(f"missing file: {run_dir / name}")


def _read_csv(path: Path, header: tuple[str, ...]) -> list[list[float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != header:
        raise RenderError(f"malformed file (expected header {','.join(header)}): {path}")
    if len(rows) == 1:
        raise RenderError(f"empty file: {path}")
    try:
        return [[float(c) for c in row] for row in rows[1:]]
    except ValueError as exc:
        raise RenderError(f"malformed file ({exc}): {path}") from exc


def read_histogram(run_dir: Path) -> dict:
    rows = _read_csv(Path(run_dir) / "histogram.csv", ("left", "right", "count", "density"))
    return {
        "left": [r[0] for r in rows],
        "right": [r[1] for r in rows],
        "count": [r[2] for r in rows],
        "density": [r[3] for r in rows],
    }


def read_density(run_dir: Path) -> dict:
    rows = _read_csv(Path(run_dir) / "density.csv", ("x", "pdf", "cdf"))
    return {"x": [r[0] for r in rows], "pdf": [r[1] for r in rows], "cdf": [r[2] for r in rows]}


def read_report(run_dir: Path) -> dict:
    path = Path(run_dir) / "report.json"
    try:
        report = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise RenderError(f"malformed file ({exc}): {path}") from exc
    for key in ("ks", "zero_atom"):
        if key not in report:
            raise RenderError(f"malformed file (missing key {key!r}): {path}")
    return report


def _draw_panel(ax, spec: FigureSpec) -> dict:
    hist = read_histogram(spec.run_dir)
    dens = read_density(spec.run_dir)
    report = read_report(spec.run_dir)

    widths = [r - l for l, r in zip(hist["left"], hist["right"])]
    ax.bar(hist["left"], hist["density"], width=widths, align="edge",
           color=BAR_COLOR, edgecolor="none", label="eigenvalues")
    ax.plot(dens["x"], dens["pdf"], color=CURVE_COLOR, linewidth=1.4, label="theory")

    atom_drawn = False
    zero_atom = float(report["zero_atom"])
    if zero_atom > 0.0 and spec.atom_marker != "off":
        top = max(max(hist["density"]), max(dens["pdf"])) or 1.0
        ax.plot([0.0], [0.0], marker="o", color=ATOM_COLOR, markersize=6, clip_on=False)
        ax.vlines(0.0, 0.0, 0.9 * top, color=ATOM_COLOR, linewidth=1.6)
        ax.annotate(f"mass {zero_atom:.4g} at 0", xy=(0.0, 0.9 * top),
                    textcoords="offset points", xytext=(4, 2), color=ATOM_COLOR, fontsize=8)
        atom_drawn = True

    ks = float(report["ks"])
    ax.annotate(f"KS = {ks:.4f}", xy=(0.98, 0.95), xycoords="axes fraction",
                ha="right", va="top", fontsize=9)
    if spec.title:
        ax.set_title(spec.title, fontsize=10)
    ax.set_xlabel("eigenvalue")
    ax.set_ylabel("density")
    if spec.y_limit is not None:
        ax.set_ylim(0.0, spec.y_limit)
    else:
        ax.set_ylim(bottom=0.0)
    ax.legend(loc="upper right", fontsize=8, frameon=False,
              bbox_to_anchor=(0.98, 0.90))
    return {
        "bars": len(hist["left"]),
        "curve_points": len(dens["x"]),
        "ks": ks,
        "zero_atom": zero_atom,
        "atom_marker_drawn": atom_drawn,
    }


def render(spec: FigureSpec) -> dict:
    """Render one run directory to an image; returns a summary of drawn elements."""
    _check_run_dir(Path(spec.run_dir))
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)
    try:
        summary = _draw_panel(ax, spec)
        out = spec.resolved_out()
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, metadata=PNG_METADATA)
    finally:
        plt.close(fig)
    summary["out_path"] = str(spec.resolved_out())
    return summary


def render_grid(specs: list[FigureSpec], out_path: Path) -> dict:
    """Compose one panel per run into a single multi-panel image."""
    if not specs:
        raise RenderError("no run directories given")
    missing = [str(s.run_dir) for s in specs
               if not all((Path(s.run_dir) / name).is_file() for name in REQUIRED_FILES)]
    if missing:
        raise RenderError("missing or incomplete run directories: " + ", ".join(missing))

    n = len(specs)
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(5.6 * cols, 3.8 * rows), dpi=120,
                             squeeze=False)
    try:
        summaries = []
        for i, spec in enumerate(specs):
            ax = axes[i // cols][i % cols]
            summaries.append(_draw_panel(ax, spec))
        for j in range(n, rows * cols):
            axes[j // cols][j % cols].set_axis_off()
        fig.tight_layout()
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out_path, metadata=PNG_METADATA)
    finally:
        plt.close(fig)
    return {"out_path": str(out_path), "panels": summaries, "layout": [rows, cols]}
