"""Stieltjes transforms and the Marchenko-Pastur free-convolution map.

The map sends an input spectral law ``nu`` (finitely supported, nonnegative)
and a shape ratio ``gamma`` to the limiting law of the sample covariance
model (1/b) Y T Y^T, with Y an a x b standard matrix, a/b -> gamma and
limspec(T) = nu.  Its Stieltjes transform s(z) solves the self-consistent
equation (deterministic-equivalent / Silverstein form)

    s = 1 / ( -z + integral  t nu(dt) / (1 + t*gamma*s) ),

and the density is recovered from Im s(x + i*eta) / pi.  For a single atom
nu = delta_c this reduces to the quadratic
c*gamma*z s^2 + (z - c(1-gamma)) s + 1 = 0.  All spectral arguments z live
strictly in the open upper half plane.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .measure import AtomicMeasure, MeasureError

_Z_CHUNK = 256          # grid points solved per vectorized batch
_ALPHA_FLOOR = 2.0e-10  # damping schedule considered exhausted below this
_PDF_NEG_TOL = 1e-6     # allowed magnitude of negative inversion noise


class SolverError(RuntimeError):
    """Fixed-point solver failed to reach the requested residual."""


def stieltjes_transform(m: AtomicMeasure, z: complex) -> complex:
    """Stieltjes transform of an atomic measure at a point of the upper half plane."""
    z = complex(z)
    if not (np.isfinite(z.real) and np.isfinite(z.imag)):
        raise ValueError("non-finite spectral argument")
    if z.imag <= 0.0:
        raise ValueError(f"spectral argument must satisfy Im z > 0, got Im z = {z.imag}")
    return complex(np.sum(m.weights / (m.atoms - z)))


def mp_zero_atom(gamma: float) -> float:
    """Mass at zero of the plain Marchenko-Pastur law with shape ratio gamma."""
    return max(0.0, 1.0 - 1.0 / gamma)


def boxtimes_zero_atom(nu: AtomicMeasure, gamma: float) -> float:
    """Mass at zero of the mapped law.

    A rank argument fixes it: the n x n model matrix has rank at most
    min(n, r) where r is the rank fraction (1 - nu({0})) of the population
    dimension, and n over that dimension tends to gamma.
    """
    w0 = nu.mass_near(0.0)
    return max(0.0, 1.0 - (1.0 - w0) / gamma)


def mp_closed_form_density(gamma: float, x: float) -> float:
    """Continuous Marchenko-Pastur density at ``x`` (the gamma > 1 atom is separate)."""
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    if not np.isfinite(x):
        raise ValueError("non-finite evaluation point")
    sq = np.sqrt(gamma)
    a, b = (1.0 - sq) ** 2, (1.0 + sq) ** 2
    if x <= max(a, 0.0) or x >= b:
        # closed endpoints carry zero density; x <= 0 is outside (0, inf)
        if x != a and x != b:
            return 0.0
        return 0.0
    return float(np.sqrt((b - x) * (x - a)) / (2.0 * np.pi * gamma * x))


def mp_support(gamma: float) -> tuple[float, float]:
    """Edges a, b of the continuous Marchenko-Pastur bulk."""
    sq = np.sqrt(gamma)
    return (1.0 - sq) ** 2, (1.0 + sq) ** 2


# ---------------------------------------------------------------------------
# self-consistent equation solver
# ---------------------------------------------------------------------------

def _rhs(t: np.ndarray, w: np.ndarray, gamma: float, z: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Right-hand side F(s) = 1/(-z + sum_j w_j t_j/(1 + t_j gamma s))."""
    den = 1.0 + t[None, :] * (gamma * s[:, None])
    i = ((w * t)[None, :] / den).sum(axis=1)
    return 1.0 / (i - z)


def _rhs_and_slope(t, w, gamma, z, s):
    """RHS and its derivative in s (for the Newton polish)."""
    den = 1.0 + t[None, :] * (gamma * s[:, None])
    i = ((w * t)[None, :] / den).sum(axis=1)
    j = ((w * t * t)[None, :] / den**2).sum(axis=1)
    f = 1.0 / (i - z)
    df = gamma * j * f**2
    return f, df


def _k_and_slopes(t, w, gamma, z, u):
    """Equation K(u, z) = z F(u/z, z) - u = 0 in the compactified variable u = z s.

    Near an atom of the mapped law s blows up like mass/eta while u stays
    bounded, so Newton steps and branch tracking are well conditioned in u.
    Returns K and its partial derivatives in u and z.
    """
    den = z[:, None] + t[None, :] * (gamma * u[:, None])
    i = z * ((w * t)[None, :] / den).sum(axis=1)            # I(u/z), poles cleared
    j = z**2 * ((w * t * t)[None, :] / den**2).sum(axis=1)  # J(u/z)
    f = 1.0 / (i - z)
    k = z * f - u
    dk_du = gamma * j * f**2 - 1.0
    dk_dz = f + f**2 * (z - gamma * j * u / z)
    return k, dk_du, dk_dz


def _newton_u(t, w, gamma, z, u0, tol, max_iter=60):
    """Newton iteration on K(u, z) = 0; residual scaled as for s = u/z."""
    u = u0.copy()
    res = np.full(z.shape, np.inf)
    thr = np.full(z.shape, tol)
    for _ in range(max_iter):
        k, dk_du, _ = _k_and_slopes(t, w, gamma, z, u)
        s = u / z
        r = np.abs(k) / np.maximum(np.abs(z), np.abs(u))
        ok = _physical(z, s)
        res = np.where(ok, r, np.inf)
        thr = np.maximum(tol, 8.0 * _noise_floor(t, w, gamma, z, s))
        if np.all(res < thr):
            break
        step = np.where(np.abs(dk_du) > 1e-30, -k / dk_du, -k)
        nxt = u + step
        u = np.where(np.isfinite(nxt), nxt, u0)
    return u, res, thr


def _scaled_residual(f: np.ndarray, s: np.ndarray) -> np.ndarray:
    """|F(s) - s| relative to max(1, |s|).

    Near an atom of the mapped law |s| reaches mass/eta, where an absolute
    residual of 1e-12 sits below the double-precision floor; the scaled
    residual is the attainable version of the same contract.
    """
    return np.abs(f - s) / np.maximum(1.0, np.abs(s))


def _noise_floor(t, w, gamma, z, s):
    """Scaled-residual floor set by round-off in evaluating F(s).

    Where a denominator 1 + t*gamma*s cancels catastrophically (pole
    clusters of the equation) no iteration can certify a residual below
    this; accepting down to the floor is the attainable version of the
    tolerance contract.
    """
    eps = np.finfo(float).eps
    den = 1.0 + t[None, :] * (gamma * s[:, None])
    dden = eps * 2.0 * (1.0 + np.abs(t[None, :] * (gamma * s[:, None])))
    terms = (w * t)[None, :] / den
    i_abs = np.abs(terms.sum(axis=1))
    di = ((w * t)[None, :] * dden / np.abs(den) ** 2).sum(axis=1)
    f_abs2 = np.abs(1.0 / (terms.sum(axis=1) - z)) ** 2
    df = f_abs2 * (di + eps * (np.abs(z) + i_abs))
    return (df + eps * np.abs(s)) / np.maximum(1.0, np.abs(s))


def _damped_iteration(t, w, gamma, z, s0, tol, max_iter, alpha0=1.0, halving=True):
    """Damped Picard iteration with per-point step control.

    Each point carries its own damping factor, halved after any residual
    increase.  Points are frozen once the scaled residual drops below
    ``tol``; the iterate sequence at one point never depends on any other
    point.
    """
    s = s0.copy()
    alpha = np.full(z.shape, alpha0)
    prev = np.full(z.shape, np.inf)
    res = np.full(z.shape, np.inf)
    active = np.ones(z.shape, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        f = _rhs(t, w, gamma, z[idx], s[idx])
        r = _scaled_residual(f, s[idx])
        res[idx] = r
        conv = r < tol
        active[idx[conv]] = False
        live = idx[~conv]
        if live.size == 0:
            continue
        if halving:
            worse = res[live] > prev[live]
            alpha[live[worse]] *= 0.5
        prev[idx] = r
        a = alpha[live]
        s[live] = (1.0 - a) * s[live] + a * f[~conv]
        if halving and np.all(alpha[live] < _ALPHA_FLOOR):
            break
    return s, res


def _physical(z, s):
    """Dual Herglotz test selecting the branch of an actual law on [0, inf).

    Both s(z) and z s(z) + 1 = integral x/(x-z) must map the upper half
    plane into itself; spurious roots of the polynomial system violate the
    second condition even when Im s > 0.
    """
    return (s.imag > 0.0) & ((z * s).imag > 0.0)


def _newton(t, w, gamma, z, s0, tol, max_iter=80):
    """Newton iteration on F(s) - s = 0.

    Convergence requires the physical branch: a point that lands on the
    conjugate branch or a spurious root keeps a failing residual so a later
    stage retries it, instead of being accepted with a small |F(s) - s|.
    """
    s = s0.copy()
    res = np.full(z.shape, np.inf)
    active = np.ones(z.shape, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        f, df = _rhs_and_slope(t, w, gamma, z[idx], s[idx])
        r = _scaled_residual(f, s[idx])
        ok = _physical(z[idx], s[idx])
        res[idx] = np.where(ok, r, np.inf)
        conv = (r < tol) & ok
        active[idx[conv]] = False
        live = idx[~conv]
        if live.size == 0:
            continue
        denom = 1.0 - df[~conv]
        step = np.where(np.abs(denom) > 1e-30, (f[~conv] - s[live]) / denom, f[~conv] - s[live])
        nxt = s[live] + step
        nxt = np.where(np.isfinite(nxt), nxt, -1.0 / z[live])
        s[live] = nxt
    return s, res


def _descend_eta(t, w, gamma, x: float, target_eta: float, scale: float, tol: float):
    """Continuation in the imaginary part for one grid abscissa.

    High above the axis the damped iteration provably lands on the Herglotz
    branch; the solution is then tracked down to the target height in the
    compactified variable u = z s, with an Euler predictor along the branch
    and a Newton corrector per rung.  The descent ratio shrinks whenever
    tracking loses the branch.  Needed where the Herglotz root is
    Picard-repelling (spectral gaps and the atom side of the support near
    the real axis).
    """
    eta = max(scale, 10.0 * target_eta)
    z = np.array([complex(x, eta)])
    s, r = _damped_iteration(t, w, gamma, z, -1.0 / z, tol, 400, alpha0=0.5, halving=False)
    s, r = _newton(t, w, gamma, z, s, tol)
    if not (r[0] < tol and _physical(z, s)[0]):
        return s[0], np.inf
    u = z * s
    factor = 0.5
    rungs = 0
    res = r
    while rungs < 800:
        rungs += 1
        eta_next = max(target_eta, eta * factor)
        z_prev = np.array([complex(x, eta)])
        z = np.array([complex(x, eta_next)])
        k, dk_du, dk_dz = _k_and_slopes(t, w, gamma, z_prev, u)
        vel = np.where(np.abs(dk_du) > 1e-30, -dk_dz / dk_du, 0.0)
        guess = u + vel * 1j * (eta_next - eta)
        guess = np.where(np.isfinite(guess), guess, u)
        u_try, r_try, thr = _newton_u(t, w, gamma, z, guess, tol)
        if not r_try[0] < thr[0]:
            u_try, r_try, thr = _newton_u(t, w, gamma, z, u.copy(), tol)
        if r_try[0] < thr[0]:
            u, eta, res = u_try, eta_next, r_try
            factor = max(0.5, factor * factor)
            if eta <= target_eta:
                break
        else:
            factor = np.sqrt(factor)
            if factor > 0.9999:
                break
    if eta > target_eta:
        return (u / z)[0], np.inf
    return (u / z)[0], float(res[0])


def _solve_points(nu: AtomicMeasure, gamma: float, zs: np.ndarray, tol: float, max_iter: int):
    """Herglotz solution of the self-consistent equation at each z.

    Stages, each deterministic and independent per point:
      1. damped Picard from s0 = -1/z, damping halved on residual increase;
      2. restart with fixed damping 0.1 from s0 = i/Im z for any point that
         converged onto a non-Herglotz branch (Im s <= 0);
      3. Newton from the current iterate for slow but rightly-branched points;
      4. continuation in Im z from high above the axis for whatever is left.
    """
    t, w = nu.atoms, nu.weights
    s, res = _damped_iteration(t, w, gamma, zs, -1.0 / zs, tol, max_iter)

    bad_branch = (res < tol) & ~_physical(zs, s)
    if np.any(bad_branch):
        zb = zs[bad_branch]
        sb, rb = _damped_iteration(t, w, gamma, zb, 1j / zb.imag, tol, max_iter,
                                   alpha0=0.1, halving=False)
        s[bad_branch], res[bad_branch] = sb, rb

    rough = (res >= tol) & _physical(zs, s)
    if np.any(rough):
        sr, rr = _newton(t, w, gamma, zs[rough], s[rough].copy(), tol)
        s[rough], res[rough] = sr, rr

    stuck = (res >= tol) | ~_physical(zs, s)
    if np.any(stuck):
        scale = max(nu.max_atom, 1.0) * (1.0 + np.sqrt(gamma)) ** 2
        for j in np.flatnonzero(stuck):
            s[j], res[j] = _descend_eta(t, w, gamma, zs[j].real, zs[j].imag, scale, tol)

    thresh = np.maximum(tol, 8.0 * _noise_floor(t, w, gamma, zs, s))
    fail = (res >= thresh) | ~_physical(zs, s) | ~np.isfinite(s)
    if np.any(fail):
        k = int(np.argmax(np.where(fail, np.where(np.isfinite(res), res, 1e300), -np.inf)))
        raise SolverError(
            f"self-consistent equation unsolved at {int(fail.sum())} point(s); "
            f"worst residual {res[k]:.3e} at z = {zs[k]!r} (tol {tol:g})"
        )
    return s


def _validate_map_inputs(nu: AtomicMeasure, gamma: float) -> None:
    if gamma <= 0.0 or not np.isfinite(gamma):
        raise ValueError("gamma must be a positive real")
    if nu.min_atom < 0.0:
        raise MeasureError("input law must be supported on [0, inf)")


def mp_boxtimes_stieltjes(nu: AtomicMeasure, gamma: float, z: complex,
                          tol: float = 1e-12, max_iter: int = 2000) -> complex:
    """Stieltjes transform of the mapped law at one upper-half-plane point."""
    _validate_map_inputs(nu, gamma)
    z = complex(z)
    if not (np.isfinite(z.real) and np.isfinite(z.imag)):
        raise ValueError("non-finite spectral argument")
    if z.imag <= 0.0:
        raise ValueError(f"spectral argument must satisfy Im z > 0, got Im z = {z.imag}")
    s = _solve_points(nu, gamma, np.array([z], dtype=complex), tol, max_iter)
    return complex(s[0])


# ---------------------------------------------------------------------------
# density recovery on a grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridDensity:
    """Sampled continuous density and CDF of a spectral law, plus the mass at zero.

    The CDF includes the zero atom: cdf[j] is the full law's mass on
    (-inf, xs[j]].
    """

    xs: np.ndarray
    pdf: np.ndarray
    cdf: np.ndarray
    zero_atom: float

    def __post_init__(self) -> None:
        if np.any(np.diff(self.xs) <= 0.0):
            raise ValueError("grid must be strictly increasing")
        if np.any(self.pdf < 0.0):
            raise ValueError("density values must be nonnegative")
        if np.any(np.diff(self.cdf) < -1e-12):
            raise ValueError("CDF must be nondecreasing")
        if not 0.0 <= self.zero_atom <= 1.0:
            raise ValueError("zero atom mass must lie in [0, 1]")
        mass = self.zero_atom + np.trapezoid(self.pdf, self.xs)
        if abs(mass - 1.0) > 5e-3:
            raise ValueError(f"total mass {mass:.6f} deviates from 1 beyond 5e-3")
        if abs(self.cdf[-1] - 1.0) > 5e-3:
            raise ValueError(f"CDF tops out at {self.cdf[-1]:.6f}, expected 1 within 5e-3")
        for arr in (self.xs, self.pdf, self.cdf):
            arr.setflags(write=False)


def default_grid(nu: AtomicMeasure, gamma: float, points: int = 2001) -> np.ndarray:
    """Uniform grid from 0 past the support edge bound (1+sqrt(gamma))^2 * max atom."""
    hi = 1.1 * (1.0 + np.sqrt(gamma)) ** 2 * max(nu.max_atom, 1e-12)
    return np.linspace(0.0, hi, points)


def mp_boxtimes_density(nu: AtomicMeasure, gamma: float, xs: np.ndarray, eta: float,
                        tol: float = 1e-12, max_iter: int = 2000) -> GridDensity:
    """Recover the mapped law on a grid by Stieltjes inversion at height eta.

    The zero atom is accounted exactly: its Lorentzian smear
    zero_atom * eta / (pi * (x^2 + eta^2)) is subtracted from Im s / pi before
    clipping, so the returned pdf is the continuous part only and the CDF is
    the atom mass plus the trapezoid integral of the pdf.
    """
    _validate_map_inputs(nu, gamma)
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or xs.size < 2 or np.any(np.diff(xs) <= 0.0):
        raise ValueError("xs must be a strictly increasing 1-d grid")
    if not 1e-6 <= eta <= 1e-2:
        raise ValueError(f"eta must lie in [1e-6, 1e-2], got {eta}")

    s = np.empty(xs.size, dtype=complex)
    zs = xs + 1j * eta
    for lo in range(0, xs.size, _Z_CHUNK):
        hi = min(lo + _Z_CHUNK, xs.size)
        s[lo:hi] = _solve_points(nu, gamma, zs[lo:hi], tol, max_iter)

    atom = boxtimes_zero_atom(nu, gamma)
    raw = s.imag / np.pi - atom * eta / (np.pi * (xs**2 + eta**2))
    worst = float(raw.min())
    if worst < -_PDF_NEG_TOL:
        raise SolverError(f"inversion noise {worst:.3e} exceeds {-_PDF_NEG_TOL:.0e}")
    pdf = np.clip(raw, 0.0, None)
    if pdf[-1] > 1e-4:
        raise ValueError(
            f"grid does not cover the support: pdf({xs[-1]:g}) = {pdf[-1]:.3e} > 1e-4"
        )

    inc = np.concatenate(([0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(xs))))
    cdf = atom + inc
    return GridDensity(xs=xs, pdf=pdf, cdf=cdf, zero_atom=atom)


def theoretical_cdf(gd: GridDensity, x) -> np.ndarray | float:
    """Law's CDF at x: zero below the support side, clamped interpolation elsewhere."""
    x = np.asarray(x, dtype=float)
    out = np.where(x < 0.0, 0.0, np.interp(x, gd.xs, gd.cdf))
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def law_quantile(gd: GridDensity, u) -> np.ndarray | float:
    """Generalized inverse of the CDF; the zero atom maps low quantiles to 0."""
    u = np.asarray(u, dtype=float)
    c, x = gd.cdf, gd.xs
    # keep the last grid point of each flat CDF run so plateaus invert rightward
    keep = np.concatenate((np.diff(c) > 1e-15, [True]))
    ck, xk = c[keep], x[keep]
    out = np.interp(u, ck, xk)
    out = np.where(u <= gd.zero_atom + 1e-15, 0.0, out)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# serialization: CSV with header x,pdf,cdf plus a JSON sidecar
# ---------------------------------------------------------------------------

def density_to_csv(gd: GridDensity, path) -> None:
    lines = ["x,pdf,cdf"]
    lines += [f"{x:.17g},{p:.17g},{c:.17g}" for x, p, c in zip(gd.xs, gd.pdf, gd.cdf)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def density_sidecar(gd: GridDensity, nu: AtomicMeasure, gamma: float, eta: float) -> dict:
    return {
        "gamma": gamma,
        "nu_atoms": [float(a) for a in nu.atoms],
        "nu_weights": [float(w) for w in nu.weights],
        "eta": eta,
        "zero_atom": gd.zero_atom,
    }


def density_sidecar_to_json(gd: GridDensity, nu: AtomicMeasure, gamma: float, eta: float, path) -> None:
    Path(path).write_text(
        json.dumps(density_sidecar(gd, nu, gamma, eta), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
