"""Console entry points: plot one run, or compose several runs into a grid."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import FigureSpec, RenderError, render, render_grid


def main_plot(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hadspec-plot",
        description="Render a comparison run directory as a histogram/theory overlay",
    )
    parser.add_argument("run_dir", help="directory containing histogram.csv, density.csv, report.json")
    parser.add_argument("--out", default=None, help="output image path (default <run_dir>/figure.png)")
    parser.add_argument("--title", default=None)
    parser.add_argument("--y-limit", type=float, default=None)
    parser.add_argument("--no-atom-marker", action="store_true")
    args = parser.parse_args(argv)
    spec = FigureSpec(
        run_dir=Path(args.run_dir),
        title=args.title,
        out_path=Path(args.out) if args.out else None,
        y_limit=args.y_limit,
        atom_marker="off" if args.no_atom_marker else "stem",
    )
    try:
        summary = render(spec)
    except RenderError as exc:
        print(f"hadspec-plot: error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {summary['out_path']} (ks={summary['ks']:.4f})")
    return 0


def main_plot_grid(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hadspec-plot-grid",
        description="Compose several comparison runs into one multi-panel image",
    )
    parser.add_argument("run_dirs", nargs="+")
    parser.add_argument("--out", default="grid.png")
    parser.add_argument("--titles", nargs="*", default=None,
                        help="optional per-panel titles, matched by position")
    args = parser.parse_args(argv)
    titles = args.titles or [None] * len(args.run_dirs)
    if len(titles) < len(args.run_dirs):
        titles = titles + [None] * (len(args.run_dirs) - len(titles))
    specs = [FigureSpec(run_dir=Path(d), title=t) for d, t in zip(args.run_dirs, titles)]
    try:
        summary = render_grid(specs, Path(args.out))
    except RenderError as exc:
        print(f"hadspec-plot-grid: error: {exc}", file=sys.stderr)
        return 1
    rows, cols = summary["layout"]
    print(f"wrote {summary['out_path']} ({rows}x{cols} panels)")
    return 0


if __name__ == "__main__":
    sys.exit(main_plot())
