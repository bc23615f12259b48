"""Population covariance matrices for the row model: build, factor, spectrum.

Supported kinds: identity, atomic (diagonal with prescribed value
proportions), toeplitz with entries rho^|i-j|, and a seeded Wishart draw
rescaled to unit mean eigenvalue.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EIG_ZERO = 1e-12   # eigenvalues below this are treated as exact kernel
_INDEFINITE = -1e-8


class CovarianceError(ValueError):
    """Invalid covariance specification or matrix."""


@dataclass(frozen=True)
class CovarianceSpec:
    """Declarative description of one population covariance at dimension d."""

    kind: str
    d: int
    values: tuple[float, ...] | None = None
    proportions: tuple[float, ...] | None = None
    rho: float | None = None
    gamma_prime: float | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.d < 1:
            raise CovarianceError("dimension must be at least 1")
        if self.kind == "identity":
            pass
        elif self.kind == "atomic":
            if not self.values or not self.proportions or len(self.values) != len(self.proportions):
                raise CovarianceError("atomic spec needs matching values and proportions")
            if any(v <= 0.0 for v in self.values):
                raise CovarianceError("atomic covariance values must be positive")
            if any(p < 0.0 for p in self.proportions) or sum(self.proportions) <= 0.0:
                raise CovarianceError("proportions must be nonnegative with positive sum")
        elif self.kind == "toeplitz":
            if self.rho is None or not abs(self.rho) < 1.0:
                raise CovarianceError("toeplitz requires |rho| < 1")
        elif self.kind == "wishart":
            if self.gamma_prime is None or self.gamma_prime <= 0.0:
                raise CovarianceError("wishart requires gamma_prime > 0")
        else:
            raise CovarianceError(f"unknown covariance kind {self.kind!r}")

    @staticmethod
    def from_dict(obj: dict, d: int) -> "CovarianceSpec":
        kind = obj.get("kind")
        if kind == "identity":
            return CovarianceSpec("identity", d)
        if kind == "atomic":
            return CovarianceSpec("atomic", d,
                                  values=tuple(float(v) for v in obj["values"]),
                                  proportions=tuple(float(p) for p in obj["proportions"]))
        if kind == "toeplitz":
            return CovarianceSpec("toeplitz", d, rho=float(obj["rho"]))
        if kind == "wishart":
            return CovarianceSpec("wishart", d, gamma_prime=float(obj["gamma_prime"]),
                                  seed=int(obj.get("seed", 0)))
        raise CovarianceError(f"unknown covariance kind {kind!r}")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "atomic":
            out["values"] = list(self.values)
            out["proportions"] = list(self.proportions)
        elif self.kind == "toeplitz":
            out["rho"] = self.rho
        elif self.kind == "wishart":
            out["gamma_prime"] = self.gamma_prime
            out["seed"] = self.seed
        return out


class CovarianceMatrix:
    """Dense symmetric PSD matrix with cached spectrum and square-root factor.

    Immutable after construction; all caches are filled eagerly so instances
    can be shared across threads.
    """

    def __init__(self, mat: np.ndarray, norm_bound: float | None = None):
        mat = np.asarray(mat, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise CovarianceError("covariance must be square")
        if not np.all(np.isfinite(mat)):
            raise CovarianceError("covariance has non-finite entries")
        if np.max(np.abs(mat - mat.T)) > 1e-12:
            raise CovarianceError("covariance must be symmetric within 1e-12")

        self.mat = mat.copy()
        evals = np.linalg.eigvalsh(self.mat)
        if evals[0] < _INDEFINITE:
            raise CovarianceError(f"indefinite covariance: min eigenvalue {evals[0]:.3e}")
        self.spectrum = np.clip(evals, 0.0, None)
        self.spectral_norm = float(self.spectrum[-1])
        self.norm_bound = float(norm_bound) if norm_bound is not None else self.spectral_norm
        self.sqrt = self._factor()
        for arr in (self.mat, self.spectrum, self.sqrt):
            arr.setflags(write=False)

    @property
    def d(self) -> int:
        return self.mat.shape[0]

    def _factor(self) -> np.ndarray:
        try:
            return np.linalg.cholesky(self.mat)
        except np.linalg.LinAlgError:
            lam, vec = np.linalg.eigh(self.mat)
            lam = np.where(lam < _EIG_ZERO, 0.0, lam)
            return (vec * np.sqrt(lam)) @ vec.T


def build_sigma(spec: CovarianceSpec) -> CovarianceMatrix:
    """Realize a covariance spec as a concrete matrix with its norm bound."""
    d = spec.d
    if spec.kind == "identity":
        return CovarianceMatrix(np.eye(d), norm_bound=1.0)
    if spec.kind == "atomic":
        counts = _allocate_counts(spec.proportions, d)
        diag = np.concatenate([np.full(c, v) for v, c in zip(spec.values, counts)])
        return CovarianceMatrix(np.diag(diag), norm_bound=max(spec.values))
    if spec.kind == "toeplitz":
        idx = np.arange(d)
        mat = spec.rho ** np.abs(idx[:, None] - idx[None, :])
        bound = (1.0 + abs(spec.rho)) / (1.0 - abs(spec.rho))
        return CovarianceMatrix(mat, norm_bound=bound)
    if spec.kind == "wishart":
        m = max(1, round(d / spec.gamma_prime))
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(spec.seed)))
        g = rng.standard_normal((d, m))
        mat = g @ g.T / m
        mat *= d / np.trace(mat)
        mat = 0.5 * (mat + mat.T)
        return CovarianceMatrix(mat)  # norm bound recorded empirically
    raise CovarianceError(f"unknown covariance kind {spec.kind!r}")


def _allocate_counts(proportions, d: int) -> list[int]:
    """Integer cell counts per value; leftover cells go to the largest proportion."""
    p = np.asarray(proportions, dtype=float)
    p = p / p.sum()
    counts = np.floor(p * d).astype(int)
    counts[int(np.argmax(p))] += d - int(counts.sum())
    return counts.tolist()


def sqrt_factor(sigma: CovarianceMatrix) -> np.ndarray:
    """Factor L with L L^T equal to the covariance (Cholesky or symmetric root)."""
    return sigma.sqrt


def spectrum(sigma: CovarianceMatrix) -> np.ndarray:
    """Ascending eigenvalues, negative numerical noise clipped at zero."""
    return sigma.spectrum
