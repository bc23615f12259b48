"""Distances between empirical spectra and reference laws, and histogramming."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Eigenvalues of rank-deficient models land at O(1e-12), not exactly 0; anything
# below this is compared against the law's jump at zero.
ZERO_SNAP = 1e-8


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class Histogram:
    """Equal-width histogram with density normalization (integrates to 1)."""

    edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray

    def __post_init__(self) -> None:
        for arr in (self.edges, self.counts, self.density):
            arr.setflags(write=False)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


def histogram(eigs, bins: int | None = None) -> Histogram:
    """Histogram over the padded sample range.

    With ``bins`` omitted, the Freedman-Diaconis rule picks the count, floored
    at 30.
    """
    x = np.sort(np.asarray(eigs, dtype=float).ravel())
    if x.size == 0:
        raise MetricError("empty sample")
    if bins is None:
        bins = _fd_bins(x)
    if bins < 1:
        raise MetricError("need at least one bin")
    pad = 1e-9 * max(1.0, abs(x[0]), abs(x[-1]))
    edges = np.linspace(x[0] - pad, x[-1] + pad, bins + 1)
    counts, _ = np.histogram(x, bins=edges)
    density = counts / (x.size * np.diff(edges))
    return Histogram(edges=edges, counts=counts, density=density)


def _fd_bins(x: np.ndarray, floor: int = 30, cap: int = 400) -> int:
    # degenerate spreads (e.g. mostly-zero spectra) fall back to the floor
    iqr = float(np.subtract(*np.percentile(x, [75, 25])))
    span = float(x[-1] - x[0])
    if span <= 0.0 or iqr <= 1e-9 * span:
        return floor
    width = 2.0 * iqr / x.size ** (1.0 / 3.0)
    return int(np.clip(np.ceil(span / width), floor, cap))


def ks_distance(eigs, law, zero_snap: float = ZERO_SNAP) -> float:
    """Two-sided Kolmogorov-Smirnov distance between a sample and a CDF callable.

    ``law`` must accept an ndarray of evaluation points.  Sample values below
    ``zero_snap`` count as exact zeros so near-kernel eigenvalues are held
    against the law's jump at 0.  The lower empirical bound is compared with
    the law's left limit, so an atom shared by sample and law contributes no
    spurious distance.
    """
    x = np.sort(np.asarray(eigs, dtype=float).ravel())
    if x.size == 0:
        raise MetricError("empty sample")
    x = np.where(x < zero_snap, 0.0, x)
    f_right = np.asarray(law(x), dtype=float)
    f_left = np.asarray(law(x - (1e-9 * np.abs(x) + 1e-12)), dtype=float)
    n = x.size
    # tie-aware empirical CDF: a block of equal values jumps as one
    emp_right = np.searchsorted(x, x, side="right") / n
    emp_left = np.searchsorted(x, x, side="left") / n
    hi = np.abs(emp_right - f_right)
    lo = np.abs(emp_left - f_left)
    return float(np.maximum(hi, lo).max())


def wasserstein1(eigs, law_quantiles) -> float:
    """Order-1 Wasserstein distance via midpoint quantiles of the reference law."""
    x = np.sort(np.asarray(eigs, dtype=float).ravel())
    if x.size == 0:
        raise MetricError("empty sample")
    n = x.size
    q = np.asarray(law_quantiles((np.arange(n) + 0.5) / n), dtype=float)
    return float(np.mean(np.abs(x - q)))


def histogram_to_csv(h: Histogram, path) -> None:
    lines = ["left,right,count,density"]
    lines += [
        f"{l:.17g},{r:.17g},{int(c)},{d:.17g}"
        for l, r, c, d in zip(h.edges[:-1], h.edges[1:], h.counts, h.density)
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
