"""Command line driver: theory curves, simulations, comparisons, tensor and
concentration checks.

Every command reads one JSON config (a file path or a shipped preset name),
writes into one run directory, and is bit-for-bit deterministic given
(config, seed).  A manifest.json is created before any output and finalized
with checksums and wall time afterwards; it is the only volatile file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, measure, metrics, stieltjes
from .covmodel import CovarianceSpec, build_sigma
from .simulate import ExperimentConfig, run_experiment, sample_matrix, stream
from .tensoralg import concentration_point, tensor_columns_check, tensor_spectrum_oracle, braid

PRESETS = ("fig1", "fig2", "fig3", "fig4", "mp_identity", "tensor", "concentration")


class CliError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config and manifest plumbing
# ---------------------------------------------------------------------------

def load_config(name_or_path: str) -> dict:
    p = Path(name_or_path)
    if p.exists():
        return json.loads(p.read_text(encoding="utf-8"))
    if name_or_path in PRESETS:
        text = resources.files("hadspec").joinpath(f"presets/{name_or_path}.json").read_text("utf-8")
        return json.loads(text)
    raise CliError(f"config {name_or_path!r} is neither a file nor a preset {PRESETS}")


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()[:8]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class RunManifest:
    """Run provenance: written before any output, finalized with checksums."""

    def __init__(self, out_dir: Path, command: str, config_path: str, cfg: dict, seed):
        self.out_dir = out_dir
        self.t0 = time.perf_counter()
        self.data = {
            "command": command,
            "config_path": str(config_path),
            "resolved_config": cfg,
            "output_directory": str(out_dir),
            "seed": seed,
            "tool_version": __version__,
            "wall_time_s": None,
            "files": {},
        }
        out_dir.mkdir(parents=True, exist_ok=True)
        self._write()

    def _write(self) -> None:
        (self.out_dir / "manifest.json").write_text(canonical_json(self.data), encoding="utf-8")

    def finalize(self) -> None:
        files = sorted(p.name for p in self.out_dir.iterdir() if p.name != "manifest.json")
        self.data["files"] = {name: _sha256(self.out_dir / name) for name in files}
        self.data["wall_time_s"] = time.perf_counter() - self.t0
        self._write()


def write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def eigenvalues_to_csv(eigs: np.ndarray, path: Path) -> None:
    lines = ["eigenvalue"] + [f"{v:.17g}" for v in eigs]
    write_text(path, "\n".join(lines) + "\n")


def resolve_out_dir(args, command: str, cfg: dict) -> Path:
    if args.out:
        return Path(args.out)
    seed = cfg.get("seed", 0)
    return Path("runs") / f"{command}-{config_hash(cfg)}-{seed}"


def apply_overrides(cfg: dict, args) -> dict:
    cfg = dict(cfg)
    for key in ("seed", "replicas", "eta", "grid_points", "n"):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            cfg[key] = val
    return cfg


# ---------------------------------------------------------------------------
# theory law construction (exact atoms where the spec is exact)
# ---------------------------------------------------------------------------

def exact_or_realized_measure(spec_dict: dict, d: int | None) -> measure.AtomicMeasure:
    kind = spec_dict.get("kind")
    if kind == "identity":
        return measure.dirac(1.0)
    if kind == "atomic":
        props = np.asarray(spec_dict["proportions"], dtype=float)
        return measure.atomic(spec_dict["values"], props / props.sum())
    if d is None:
        raise CliError(f"covariance kind {kind!r} needs a dimension d in the config")
    sigma = build_sigma(CovarianceSpec.from_dict(spec_dict, d))
    return measure.from_covariance_spectrum(sigma.spectrum)


def theory_law(cfg: dict):
    specs = cfg["specs"]
    dims = cfg.get("d") or [None] * len(specs)
    if len(dims) != len(specs):
        raise CliError("config d and specs must have matching lengths")
    mus = [exact_or_realized_measure(s, d) for s, d in zip(specs, dims)]
    nu = measure.mult_convolve_all(mus)
    gamma = float(cfg["gamma"])
    grid_points = int(cfg.get("grid_points", 2001))
    eta = float(cfg.get("eta", 1e-4))
    tol = float(cfg.get("tol", 1e-12))
    xs = stieltjes.default_grid(nu, gamma, grid_points)
    gd = stieltjes.mp_boxtimes_density(nu, gamma, xs, eta, tol=tol)
    return gd, nu, gamma, eta


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_theory(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    out = resolve_out_dir(args, "theory", cfg)
    manifest = RunManifest(out, "theory", args.config, cfg, cfg.get("seed", 0))
    gd, nu, gamma, eta = theory_law(cfg)
    stieltjes.density_to_csv(gd, out / "density.csv")
    stieltjes.density_sidecar_to_json(gd, nu, gamma, eta, out / "theory.json")
    manifest.finalize()
    print(f"theory: zero_atom={gd.zero_atom:.6g} -> {out}")
    return 0


def _write_simulation(res, out: Path) -> None:
    eigenvalues_to_csv(res.eigenvalues, out / "eigenvalues.csv")
    stieltjes.density_to_csv(res.density, out / "density.csv")
    stieltjes.density_sidecar_to_json(
        res.density, res.nu, res.realized_gamma, res.config["eta"], out / "theory.json")
    report = {
        "ks": res.ks,
        "w1": res.w1,
        "gamma": res.config["gamma"],
        "realized_gamma": res.realized_gamma,
        "C": res.c_bound,
        "C_per_factor": res.norm_bounds,
        "sigma_norms": res.sigma_norms,
        "zero_atom": res.density.zero_atom,
        "eigenvalue_count": int(res.eigenvalues.size),
        "config": res.config,
    }
    write_text(out / "report.json", canonical_json(report))


def cmd_simulate(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    out = resolve_out_dir(args, "simulate", cfg)
    manifest = RunManifest(out, "simulate", args.config, cfg, cfg.get("seed", 0))
    res = run_experiment(ExperimentConfig.from_dict(cfg))
    _write_simulation(res, out)
    manifest.finalize()
    print(f"simulate: ks={res.ks:.4f} w1={res.w1:.4f} -> {out}")
    return 0


def cmd_compare(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    out = resolve_out_dir(args, "compare", cfg)
    manifest = RunManifest(out, "compare", args.config, cfg, cfg.get("seed", 0))
    res = run_experiment(ExperimentConfig.from_dict(cfg))
    _write_simulation(res, out)
    metrics.histogram_to_csv(res.hist, out / "histogram.csv")
    manifest.finalize()
    print(f"compare: ks={res.ks:.4f} w1={res.w1:.4f} -> {out}")
    return 0


_TENSOR_KINDS = {
    "identity": lambda d: CovarianceSpec("identity", d),
    "atomic": lambda d: CovarianceSpec("atomic", d, values=tuple(float(v) for v in range(1, d + 1)),
                                       proportions=tuple([1.0] * d)),
    "toeplitz": lambda d: CovarianceSpec("toeplitz", d, rho=0.5),
}


def cmd_tensor_check(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    out = resolve_out_dir(args, "tensor-check", cfg)
    manifest = RunManifest(out, "tensor-check", args.config, cfg, cfg.get("seed", 0))
    kinds = cfg.get("kinds", ["identity", "atomic", "toeplitz"])
    cases = []
    for case in cfg["cases"]:
        dims = [int(v) for v in case["d"]]
        for rot in range(len(kinds)):
            sigmas = [build_sigma(_TENSOR_KINDS[kinds[(i + rot) % len(kinds)]](d))
                      for i, d in enumerate(dims)]
            evals = np.linalg.eigvalsh(braid(sigmas))
            oracle = tensor_spectrum_oracle(sigmas)
            bound = float(np.prod([s.spectral_norm for s in sigmas]))
            cases.append({
                "d": dims,
                "kinds": [kinds[(i + rot) % len(kinds)] for i in range(len(dims))],
                "spectrum_max_dev": float(np.max(np.abs(evals - oracle))),
                "norm_bound_slack": bound + 1e-10 - float(evals[-1]),
            })
    col = cfg.get("columns", {"instances": 20, "n": 8, "seed": 5})
    col_devs = []
    dims_cycle = [(6,), (3, 2), (2, 2, 2)]
    dist_cycle = ["gaussian", "rademacher", "uniform"]
    for i in range(int(col["instances"])):
        dims = dims_cycle[i % len(dims_cycle)]
        specs = [CovarianceSpec("toeplitz", d, rho=0.4) if d > 2 else CovarianceSpec("identity", d)
                 for d in dims]
        xs = [sample_matrix(sp, int(col["n"]), dist_cycle[i % 3], stream(int(col["seed"]) + i, 0, j))
              for j, sp in enumerate(specs)]
        col_devs.append(tensor_columns_check(xs, list(dims)))
    payload = {
        "spectrum_cases": cases,
        "columns_check": {"instances": len(col_devs), "max_deviation": float(max(col_devs))},
        "all_within_1e-10": bool(max(c["spectrum_max_dev"] for c in cases) < 1e-10
                                 and max(col_devs) < 1e-10
                                 and min(c["norm_bound_slack"] for c in cases) >= 0.0),
    }
    write_text(out / "tensor_check.json", canonical_json(payload))
    manifest.finalize()
    if not payload["all_within_1e-10"]:
        print("tensor-check: FAILED", file=sys.stderr)
        return 1
    print(f"tensor-check: ok -> {out}")
    return 0


def cmd_concentration(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    out = resolve_out_dir(args, "concentration", cfg)
    manifest = RunManifest(out, "concentration", args.config, cfg, cfg.get("seed", 0))
    k = int(cfg["k"])
    gamma = float(cfg.get("gamma", 1.0))
    rows = []
    for m in cfg["d_min"]:
        m = int(m)
        sigmas = [build_sigma(CovarianceSpec.from_dict(cfg.get("spec", {"kind": "identity"}), m))
                  for _ in range(k)]
        n = max(1, round(gamma * m**k))
        pt = concentration_point(sigmas, cfg.get("dist", "gaussian"),
                                 cfg.get("b_choice", "identity"), n,
                                 int(cfg.get("trials", 10000)), int(cfg.get("seed", 0)))
        rows.append(pt)
    lines = ["k,d_min,n,trials,estimate,stderr"]
    lines += [f"{p.k},{p.d_min},{p.n},{p.trials},{p.estimate:.17g},{p.stderr:.17g}" for p in rows]
    write_text(out / "concentration.csv", "\n".join(lines) + "\n")
    manifest.finalize()
    print(f"concentration: {len(rows)} sweep points -> {out}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hadspec",
        description="Spectral laws of Hadamard products of sample covariance matrices",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, extra in [
        ("theory", cmd_theory, ("eta", "grid_points", "seed")),
        ("simulate", cmd_simulate, ("eta", "grid_points", "seed", "replicas", "n")),
        ("compare", cmd_compare, ("eta", "grid_points", "seed", "replicas", "n")),
        ("tensor-check", cmd_tensor_check, ("seed",)),
        ("concentration", cmd_concentration, ("seed",)),
    ]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help=f"config file path or preset name {PRESETS}")
        p.add_argument("--out", default=None, help="output directory")
        if "seed" in extra:
            p.add_argument("--seed", type=int, default=None)
        if "replicas" in extra:
            p.add_argument("--replicas", type=int, default=None)
        if "eta" in extra:
            p.add_argument("--eta", type=float, default=None)
        if "grid_points" in extra:
            p.add_argument("--grid-points", dest="grid_points", type=int, default=None)
        if "n" in extra:
            p.add_argument("--n", type=int, default=None)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # validation and solver failures exit nonzero
        print(f"hadspec {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
