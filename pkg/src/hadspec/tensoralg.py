"""Covariance tensor oracles: braid construction, spectrum, factorization checks.

Dense small-instance verification layer.  Multi-indices (u_1, ..., u_k) are
flattened row-major, under which the braided tensor product of the factor
covariances is exactly their Kronecker product.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .covmodel import CovarianceMatrix
from .simulate import draw_entries, stream

SIZE_CAP = 4096  # dense |d| x |d| storage only


class TensorSizeError(ValueError):
    pass


def _check_cap(dims) -> int:
    total = int(np.prod(dims))
    if total > SIZE_CAP:
        raise TensorSizeError(f"flattened dimension {total} exceeds the cap {SIZE_CAP}")
    return total


def flatten_index(u, dims) -> int:
    """Row-major flattening of a multi-index."""
    return int(np.ravel_multi_index(tuple(u), tuple(dims)))


def unflatten_index(j: int, dims) -> tuple[int, ...]:
    """Inverse of ``flatten_index``."""
    return tuple(int(v) for v in np.unravel_index(j, tuple(dims)))


def braid(sigmas: list[CovarianceMatrix]) -> np.ndarray:
    """Covariance tensor of one tensorized row, as a flattened dense matrix.

    Entry at (flatten(u), flatten(v)) is the product over factors of
    sigma_i[u_i, v_i]; with row-major flattening this is the Kronecker
    product of the factor matrices.
    """
    _check_cap([s.d for s in sigmas])
    return reduce(np.kron, [s.mat for s in sigmas])


def tensor_spectrum_oracle(sigmas: list[CovarianceMatrix]) -> np.ndarray:
    """All k-fold products of per-factor eigenvalues, ascending."""
    _check_cap([s.d for s in sigmas])
    prods = reduce(np.multiply.outer, [s.spectrum for s in sigmas])
    return np.sort(prods.ravel())


def tensor_columns(xs: list[np.ndarray]) -> np.ndarray:
    """Stack of tensorized rows: column p is the Kronecker product of the p-th rows."""
    n = xs[0].shape[0]
    cols = xs[0]
    for x in xs[1:]:
        cols = (cols[:, :, None] * x[:, None, :]).reshape(n, -1)
    return cols.T


def tensor_columns_check(xs: list[np.ndarray], d: list[int]) -> float:
    """Max deviation between the tensor-column factorization and the Hadamard Gram."""
    from .simulate import hadamard_gram

    if xs[0].shape[0] > 64:
        raise TensorSizeError("columns check is a small-instance oracle (n <= 64)")
    total = _check_cap(d)
    a = tensor_columns(xs)
    direct = a.T @ a / total
    return float(np.max(np.abs(direct - hadamard_gram(xs, d))))


# ---------------------------------------------------------------------------
# concentration of tensorized quadratic forms
# ---------------------------------------------------------------------------

B_CHOICES = ("identity", "braid-of-random-psd", "random-symmetric-normalized")


def _build_b(choice: str, sigmas: list[CovarianceMatrix], rng: np.random.Generator) -> np.ndarray | None:
    """Test tensor with spectral norm at most 1; None stands for the identity."""
    total = int(np.prod([s.d for s in sigmas]))
    if choice == "identity":
        return None
    if choice == "braid-of-random-psd":
        mats = []
        for s in sigmas:
            g = rng.standard_normal((s.d, s.d))
            mats.append(g @ g.T / s.d)
        b = reduce(np.kron, mats)
    elif choice == "random-symmetric-normalized":
        g = rng.standard_normal((total, total))
        b = 0.5 * (g + g.T)
    else:
        raise ValueError(f"unknown test-tensor choice {choice!r}")
    return b / np.max(np.abs(np.linalg.eigvalsh(b)))


def quadratic_form_samples(sigmas: list[CovarianceMatrix], dist: str, b_choice: str,
                           trials: int, seed: int, batch: int = 512) -> np.ndarray:
    """Squared centered quadratic forms of independent tensorized columns.

    Each column is the Kronecker product of factor rows L_i z; the sample is
    (column^T B column - Tr(B T))^2 with T the braided covariance tensor.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    t = braid(sigmas)
    b = _build_b(b_choice, sigmas, stream(seed, 0))
    tr_bt = float(np.trace(t)) if b is None else float(np.sum(b * t))
    ls = [s.sqrt for s in sigmas]

    out = np.empty(trials)
    done = 0
    chunk_idx = 1
    while done < trials:
        size = min(batch, trials - done)
        rng = stream(seed, chunk_idx)
        rows = [draw_entries(dist, rng, (size, s.d)) @ l.T for s, l in zip(sigmas, ls)]
        cols = rows[0]
        for x in rows[1:]:
            cols = (cols[:, :, None] * x[:, None, :]).reshape(size, -1)
        if b is None:
            q = np.einsum("ij,ij->i", cols, cols)
        else:
            q = np.einsum("ij,ij->i", cols, cols @ b)
        out[done:done + size] = (q - tr_bt) ** 2
        done += size
        chunk_idx += 1
    return out


def quadratic_form_concentration(sigmas: list[CovarianceMatrix], dist: str, b_choice: str,
                                 n: int, trials: int, seed: int) -> float:
    """Monte-Carlo estimate of the n^-2 normalized quadratic-form variance."""
    samples = quadratic_form_samples(sigmas, dist, b_choice, trials, seed)
    return float(samples.mean()) / n**2


@dataclass(frozen=True)
class ConcentrationPoint:
    """One sweep point of the concentration experiment."""

    k: int
    d_min: int
    n: int
    trials: int
    estimate: float
    stderr: float


def concentration_point(sigmas: list[CovarianceMatrix], dist: str, b_choice: str,
                        n: int, trials: int, seed: int) -> ConcentrationPoint:
    samples = quadratic_form_samples(sigmas, dist, b_choice, trials, seed)
    return ConcentrationPoint(
        k=len(sigmas),
        d_min=min(s.d for s in sigmas),
        n=n,
        trials=trials,
        estimate=float(samples.mean()) / n**2,
        stderr=float(samples.std(ddof=1)) / np.sqrt(trials) / n**2,
    )
