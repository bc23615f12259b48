"""Finite atomic probability measures and their multiplicative convolution.

Atoms are spectral locations, weights their masses.  Every measure is kept
canonical: atoms strictly increasing, weights positive, total mass one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import reduce
from pathlib import Path

import numpy as np

# Atoms closer than this are one spectral location (products of exact small
# integers must collide exactly; distinct floating atoms must stay apart).
MERGE_TOL = 1e-12
_WEIGHT_SUM_TOL = 1e-9


class MeasureError(ValueError):
    """Invalid input for an atomic probability measure."""


@dataclass(frozen=True)
class AtomicMeasure:
    """Canonical finitely-supported probability measure."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        self.atoms.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self) -> int:
        return int(self.atoms.size)

    @property
    def max_atom(self) -> float:
        return float(self.atoms[-1])

    @property
    def min_atom(self) -> float:
        return float(self.atoms[0])

    def mean(self) -> float:
        return float(self.atoms @ self.weights)

    def mass_near(self, x: float, tol: float = MERGE_TOL) -> float:
        """Weight carried by atoms within ``tol`` of ``x``."""
        sel = np.abs(self.atoms - x) <= tol
        return float(self.weights[sel].sum())


def _canonicalize(atoms: np.ndarray, weights: np.ndarray, renormalize: bool = True) -> AtomicMeasure:
    """Sort, drop zero weights, merge near-coincident atoms, normalize mass."""
    keep = weights > 0.0
    atoms, weights = atoms[keep], weights[keep]
    if atoms.size == 0:
        raise MeasureError("measure has no mass")
    order = np.argsort(atoms, kind="stable")
    atoms, weights = atoms[order], weights[order]

    # group runs of atoms whose consecutive gaps are within MERGE_TOL
    starts = np.concatenate(([0], np.flatnonzero(np.diff(atoms) > MERGE_TOL) + 1))
    w = np.add.reduceat(weights, starts)
    a = np.add.reduceat(atoms * weights, starts) / w
    # merged groups sit at their weighted mean; singletons keep their exact atom
    counts = np.diff(np.append(starts, atoms.size))
    singles = counts == 1
    a[singles] = atoms[starts[singles]]

    if renormalize:
        w = w / w.sum()
    return AtomicMeasure(a, w)


def atomic(points, weights) -> AtomicMeasure:
    """Build a canonical measure from atom locations and weights."""
    a = np.asarray(points, dtype=float).ravel().copy()
    w = np.asarray(weights, dtype=float).ravel().copy()
    if a.size == 0 or a.size != w.size:
        raise MeasureError(f"need equal nonzero lengths, got {a.size} atoms and {w.size} weights")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(w))):
        raise MeasureError("non-finite atom or weight")
    if np.any(w < 0.0):
        raise MeasureError("negative weight")
    total = w.sum()
    if total == 0.0:
        raise MeasureError("all weights are zero")
    if abs(total - 1.0) > _WEIGHT_SUM_TOL:
        raise MeasureError(f"weights sum to {total!r}, expected 1 within {_WEIGHT_SUM_TOL}")
    return _canonicalize(a, w)


def dirac(x: float) -> AtomicMeasure:
    """Point mass at ``x``."""
    return atomic([x], [1.0])


def from_covariance_spectrum(eigenvalues) -> AtomicMeasure:
    """Empirical spectral measure of a PSD matrix: weight 1/d per eigenvalue."""
    e = np.asarray(eigenvalues, dtype=float).ravel()
    if e.size == 0:
        raise MeasureError("empty spectrum")
    if not np.all(np.isfinite(e)):
        raise MeasureError("non-finite eigenvalue")
    if np.any(e < 0.0):
        raise MeasureError("negative eigenvalue: covariance must be PSD")
    return _canonicalize(e.copy(), np.full(e.size, 1.0 / e.size))


def mult_convolve(mu: AtomicMeasure, nu: AtomicMeasure) -> AtomicMeasure:
    """Classical multiplicative convolution: law of a product of independent draws."""
    prods = np.multiply.outer(mu.atoms, nu.atoms).ravel()
    w = np.multiply.outer(mu.weights, nu.weights).ravel()
    return _canonicalize(prods, w)


def mult_convolve_all(measures) -> AtomicMeasure:
    """Fold ``mult_convolve`` over a nonempty sequence of measures."""
    ms = list(measures)
    if not ms:
        raise MeasureError("need at least one measure")
    return reduce(mult_convolve, ms)


def cdf(m: AtomicMeasure, x: float) -> float:
    """Right-continuous distribution function F(x) = sum of weights at atoms <= x."""
    if not np.isfinite(x):
        raise MeasureError("non-finite evaluation point")
    k = int(np.searchsorted(m.atoms, x, side="right"))
    return float(m.weights[:k].sum())


def moment(m: AtomicMeasure, p: int) -> float:
    """p-th raw moment, p a nonnegative integer."""
    if p < 0 or int(p) != p:
        raise MeasureError("moment order must be a nonnegative integer")
    return float(m.weights @ np.power(m.atoms, p))


# ---------------------------------------------------------------------------
# serialization: two-column CSV and a JSON array of [atom, weight] pairs,
# both exact round trips at 17 significant digits
# ---------------------------------------------------------------------------

def to_csv(m: AtomicMeasure, path) -> None:
    lines = ["atom,weight"]
    lines += [f"{a:.17g},{w:.17g}" for a, w in zip(m.atoms, m.weights)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def from_csv(path) -> AtomicMeasure:
    rows = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not rows or rows[0].strip() != "atom,weight":
        raise MeasureError(f"{path}: expected header 'atom,weight'")
    pairs = [tuple(float(c) for c in r.split(",")) for r in rows[1:]]
    return _from_pairs(pairs)


def to_json(m: AtomicMeasure) -> str:
    return json.dumps([[a, w] for a, w in zip(m.atoms, m.weights)])


def from_json(text: str) -> AtomicMeasure:
    return _from_pairs([(float(a), float(w)) for a, w in json.loads(text)])


def _from_pairs(pairs) -> AtomicMeasure:
    a = np.array([p[0] for p in pairs], dtype=float)
    w = np.array([p[1] for p in pairs], dtype=float)
    if _is_canonical(a, w):
        # preserve stored bits: a canonical file must round-trip exactly
        return AtomicMeasure(a, w)
    if a.size == 0:
        raise MeasureError("empty measure file")
    return _canonicalize(a, w)


def _is_canonical(a: np.ndarray, w: np.ndarray) -> bool:
    return (
        a.size > 0
        and np.all(np.isfinite(a))
        and np.all(np.isfinite(w))
        and np.all(w > 0.0)
        and np.all(np.diff(a) > MERGE_TOL)
        and abs(w.sum() - 1.0) <= MERGE_TOL
    )
