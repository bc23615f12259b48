"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Tolerances are fixed here, not calibrated.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from hadspec import cli, measure, stieltjes as st
from hadspec.covmodel import CovarianceSpec, build_sigma
from hadspec.measure import atomic, dirac, mult_convolve
from hadspec.metrics import ks_distance
from hadspec.simulate import ExperimentConfig, run_experiment, sample_matrix, stream
from hadspec.tensoralg import (
    braid,
    quadratic_form_samples,
    tensor_columns_check,
    tensor_spectrum_oracle,
)


def criterion(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def run_preset(name: str):
    cfg = ExperimentConfig.from_dict(cli.load_config(name))
    t0 = time.perf_counter()
    res = run_experiment(cfg)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def preset_results():
    out = {}
    for name in ("fig1", "fig2", "fig3", "fig4", "mp_identity"):
        with threadpool_limits(limits=1):
            out[name] = run_preset(name)
    return out


def test_theorem1_fig1(preset_results):
    res, wall = preset_results["fig1"]
    criterion(
        "Theorem-1 reproduction, Fig. 1 config (KS < 0.05, < 180 s single-threaded)",
        res.ks < 0.05 and wall < 180.0,
        f"ks={res.ks:.4f}, wall={wall:.1f}s, n={res.config['n']}, replicas={res.config['replicas']}",
    )


def test_theorem1_fig2_fig3_fig4(preset_results):
    vals = {name: preset_results[name][0].ks for name in ("fig2", "fig3", "fig4")}
    criterion(
        "Fig. 2/3/4 presets (KS < 0.06 each)",
        all(v < 0.06 for v in vals.values()),
        ", ".join(f"{k}: ks={v:.4f}" for k, v in vals.items()),
    )


def test_identity_sanity(preset_results):
    res, _ = preset_results["mp_identity"]
    criterion(
        "Identity-covariance sanity: plain MP law (KS < 0.04 at n=3042)",
        res.ks < 0.04,
        f"ks={res.ks:.4f}, zero_atom={res.density.zero_atom}",
    )


def _quadratic_oracle(gamma, z):
    a = gamma * z
    b = z + gamma - 1.0
    disc = np.sqrt(b * b - 4.0 * a + 0j)
    r1, r2 = (-b + disc) / (2 * a), (-b - disc) / (2 * a)
    return r1 if r1.imag > r2.imag else r2


def test_solver_vs_closed_form():
    nu = dirac(1.0)
    worst = 0.0
    for gamma in (0.25, 0.5, 1.0, 2.0, 4.0):
        _, b = st.mp_support(gamma)
        res = np.linspace(-0.5, 1.2 * b, 20)
        ims = np.geomspace(1e-4, 1.0, 10)
        for re in res:
            for im in ims:
                z = complex(re, im)
                s = st.mp_boxtimes_stieltjes(nu, gamma, z)
                worst = max(worst, abs(s - _quadratic_oracle(gamma, z)))
    dens_worst = 0.0
    for gamma in (0.25, 0.5, 1.0, 2.0, 4.0):
        gd = st.mp_boxtimes_density(nu, gamma, st.default_grid(nu, gamma, 2001), 1e-4)
        a, b = st.mp_support(gamma)
        sel = (gd.xs >= a + 0.05) & (gd.xs <= b - 0.05)
        closed = np.array([st.mp_closed_form_density(gamma, x) for x in gd.xs[sel]])
        dens_worst = max(dens_worst, float(np.max(np.abs(gd.pdf[sel] - closed))))
    gd4 = st.mp_boxtimes_density(nu, 4.0, st.default_grid(nu, 4.0, 2001), 1e-4)
    criterion(
        "MP-map solver vs closed form (|ds| < 1e-8 on 200-point z-grid; density within "
        "5e-3 away from edges; gamma=4 zero atom 0.75 exact)",
        worst < 1e-8 and dens_worst < 5e-3 and gd4.zero_atom == 0.75,
        f"max|ds|={worst:.2e}, max density err={dens_worst:.2e}, zero_atom={gd4.zero_atom}",
    )


def test_tensor_lemmas():
    kinds = [
        lambda d: CovarianceSpec("identity", d),
        lambda d: CovarianceSpec("atomic", d, values=tuple(float(v) for v in range(1, d + 1)),
                                 proportions=tuple([1.0] * d)),
        lambda d: CovarianceSpec("toeplitz", d, rho=0.5),
    ]
    eig_worst, bound_ok = 0.0, True
    for dims in ((2, 3), (3, 3), (2, 2, 2), (3, 2, 2)):
        for rot in range(3):
            sigmas = [build_sigma(kinds[(i + rot) % 3](d)) for i, d in enumerate(dims)]
            dense = np.linalg.eigvalsh(braid(sigmas))
            eig_worst = max(eig_worst, float(np.max(np.abs(dense - tensor_spectrum_oracle(sigmas)))))
            bound_ok &= dense[-1] <= np.prod([s.spectral_norm for s in sigmas]) + 1e-10
    col_worst = 0.0
    dims_cycle = [(6,), (3, 2), (2, 2, 2)]
    dist_cycle = ["gaussian", "rademacher", "uniform"]
    for seed in range(20):
        dims = dims_cycle[seed % 3]
        specs = [CovarianceSpec("toeplitz", d, rho=0.4) if d > 2 else CovarianceSpec("identity", d)
                 for d in dims]
        xs = [sample_matrix(sp, 8, dist_cycle[seed % 3], stream(seed, 0, i))
              for i, sp in enumerate(specs)]
        col_worst = max(col_worst, tensor_columns_check(xs, list(dims)))
    criterion(
        "Tensor lemmas (eigen equivalence 1e-10 on 4 dim tuples x 3 kind rotations; 20 "
        "column checks < 1e-10; norm bound)",
        eig_worst < 1e-10 and col_worst < 1e-10 and bound_ok,
        f"eig dev={eig_worst:.2e}, columns dev={col_worst:.2e}, norm bound ok={bound_ok}",
    )


def test_measure_algebra():
    rng = np.random.default_rng(2024)

    def rand_measure():
        k = rng.integers(1, 5)
        a = rng.uniform(0.05, 3.0, size=k)
        w = rng.uniform(0.1, 1.0, size=k)
        return atomic(a, w / w.sum())

    algebra_ok, moment_ok = True, True
    for _ in range(50):
        x, y, z = rand_measure(), rand_measure(), rand_measure()
        xy, yx = mult_convolve(x, y), mult_convolve(y, x)
        algebra_ok &= np.allclose(xy.atoms, yx.atoms, atol=1e-12, rtol=0)
        algebra_ok &= np.allclose(xy.weights, yx.weights, atol=1e-12, rtol=0)
        left = mult_convolve(xy, z)
        right = mult_convolve(x, mult_convolve(y, z))
        algebra_ok &= np.allclose(left.atoms, right.atoms, atol=1e-12, rtol=0)
        algebra_ok &= np.allclose(left.weights, right.weights, atol=1e-12, rtol=0)
        ident = mult_convolve(dirac(1.0), x)
        algebra_ok &= np.array_equal(ident.atoms, x.atoms)
        algebra_ok &= abs(xy.weights.sum() - 1.0) < 1e-12
        for p in range(1, 5):
            moment_ok &= abs(
                measure.moment(xy, p) - measure.moment(x, p) * measure.moment(y, p)) < 1e-10
    fig3 = mult_convolve(atomic([1, 2], [0.5, 0.5]), atomic([1, 2, 3], [1 / 3] * 3))
    fig3_ok = fig3.atoms.tolist() == [1.0, 2.0, 3.0, 4.0, 6.0] and np.allclose(
        fig3.weights, [1 / 6, 1 / 3, 1 / 6, 1 / 6, 1 / 6], rtol=4e-16, atol=0)
    criterion(
        "Measure algebra (commutative/associative/identity at 1e-12 on 50 random laws; "
        "moments at 1e-10; Fig. 3 convolution exact)",
        algebra_ok and moment_ok and fig3_ok,
        f"algebra={algebra_ok}, moments={moment_ok}, fig3={fig3_ok}",
    )


def test_concentration_rate():
    gamma = 1.0
    ests = []
    for m in (8, 16, 32, 64):
        sigmas = [build_sigma(CovarianceSpec("identity", m))] * 2
        n = round(gamma * m * m)
        samples = quadratic_form_samples(sigmas, "gaussian", "identity", 10_000, 7)
        ests.append(float(samples.mean()) / n**2)
    ratios = [b / a for a, b in zip(ests, ests[1:])]
    ratios_ok = all(r < 0.75 for r in ratios) and all(b < a for a, b in zip(ests, ests[1:]))

    d, n = 32, 64
    samples = quadratic_form_samples([build_sigma(CovarianceSpec("identity", d))],
                                     "gaussian", "identity", 10_000, 7)
    est = float(samples.mean()) / n**2
    se = float(samples.std(ddof=1)) / np.sqrt(samples.size) / n**2
    k1_ok = abs(est - 2 * d / n**2) < 3 * se
    criterion(
        "Concentration rate (k=2 sweep strictly decreasing with ratios < 0.75; k=1 "
        "matches 2d/n^2 within 3 SE)",
        ratios_ok and k1_ok,
        f"ratios={[f'{r:.3f}' for r in ratios]}, k1 |z|={abs(est - 2 * d / n**2) / se:.2f}",
    )


def test_determinism_byte_identical(tmp_path):
    cfg = {
        "k": 2, "n": 800, "gamma": 2.0, "d": [20, 20],
        "specs": [{"kind": "identity"}, {"kind": "atomic", "values": [1, 2], "proportions": [1, 1]}],
        "dist": "gaussian", "seed": 5, "replicas": 2, "grid_points": 801,
        "eta": 1e-4, "tol": 1e-12,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    pairs_identical = True
    for command in ("compare", "theory"):
        out1, out2 = tmp_path / f"{command}-a", tmp_path / f"{command}-b"
        assert cli.main([command, "--config", str(cfg_path), "--out", str(out1)]) == 0
        assert cli.main([command, "--config", str(cfg_path), "--out", str(out2)]) == 0
        files1 = {p.name: p.read_bytes() for p in sorted(out1.iterdir()) if p.name != "manifest.json"}
        files2 = {p.name: p.read_bytes() for p in sorted(out2.iterdir()) if p.name != "manifest.json"}
        pairs_identical &= files1 == files2 and len(files1) > 0
    criterion(
        "Determinism: repeated commands produce byte-identical CSV/JSON",
        pairs_identical,
        "compare and theory reruns compared file-by-file (manifest excluded as volatile)",
    )
