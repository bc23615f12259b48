import numpy as np
import pytest
from scipy.integrate import quad

from hadspec import measure, stieltjes as st
from hadspec.measure import atomic, dirac, mult_convolve
from hadspec.stieltjes import (
    GridDensity,
    SolverError,
    law_quantile,
    mp_boxtimes_density,
    mp_boxtimes_stieltjes,
    mp_closed_form_density,
    mp_support,
    mp_zero_atom,
    stieltjes_transform,
    theoretical_cdf,
)

GOLDEN_ROOT = 0.6180339887498949  # positive root of s^2 + s - 1 (nu=delta_1, gamma=1, z=-1)


def quadratic_oracle(c, gamma, z):
    """Herglotz root of c*gamma*z s^2 + (z - c(1-gamma)) s + 1 = 0.

    Independent closed form for single-atom input laws; the solver under
    test never sees this path.
    """
    a = c * gamma * z
    b = z - c * (1.0 - gamma)
    disc = np.sqrt(b * b - 4.0 * a + 0j)
    r1, r2 = (-b + disc) / (2 * a), (-b - disc) / (2 * a)
    return r1 if r1.imag > r2.imag else r2


def quadrature_oracle(gamma, z):
    """Stieltjes transform by numerical quadrature of the closed-form density."""
    a, b = mp_support(gamma)
    lo = max(a, 0.0)

    def re_part(x):
        return mp_closed_form_density(gamma, x) * (x - z.real) / ((x - z.real) ** 2 + z.imag**2)

    def im_part(x):
        return mp_closed_form_density(gamma, x) * z.imag / ((x - z.real) ** 2 + z.imag**2)

    re = quad(re_part, lo, b, limit=400)[0]
    im = quad(im_part, lo, b, limit=400)[0]
    return complex(re, im) + mp_zero_atom(gamma) / (0.0 - z)


class TestTransform:
    def test_point_mass_at_i(self):
        s = stieltjes_transform(dirac(1.0), 1j)
        assert abs(s - (0.5 + 0.5j)) < 1e-15

    def test_two_atoms_near_axis(self):
        s = stieltjes_transform(atomic([1, 2], [0.5, 0.5]), -1 + 1e-9j)
        assert abs(s.real - 5 / 12) < 1e-9
        assert 0 < s.imag < 1e-8

    def test_asymptotics(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            k = rng.integers(1, 5)
            atoms = rng.uniform(0.1, 4.0, size=k)
            w = rng.uniform(0.1, 1, size=k)
            m = atomic(atoms, w / w.sum())
            z = 1j * 1e4 * m.max_atom
            assert abs(z * stieltjes_transform(m, z) + 1.0) < 1e-4

    @pytest.mark.parametrize("z", [1.0 + 0j, 1.0 - 1e-3j, complex(np.nan, 1.0)])
    def test_rejects_bad_argument(self, z):
        with pytest.raises(ValueError):
            stieltjes_transform(dirac(1.0), z)


class TestMpMapSolver:
    def test_golden_value(self):
        s = mp_boxtimes_stieltjes(dirac(1.0), 1.0, -1 + 1e-8j)
        assert abs(s - GOLDEN_ROOT) < 1e-7
        # cross-check the frozen constant against both independent oracles
        assert abs(quadratic_oracle(1.0, 1.0, -1 + 1e-8j) - GOLDEN_ROOT) < 1e-7
        q = quadrature_oracle(1.0, -1 + 1e-8j)
        assert abs(q - GOLDEN_ROOT) < 1e-5

    @pytest.mark.parametrize("gamma", [0.25, 0.5, 1.0, 2.0, 4.0])
    def test_matches_quadratic_oracle_on_grid(self, gamma):
        nu = dirac(1.0)
        _, b = mp_support(gamma)
        for im in np.geomspace(1e-4, 1.0, 5):
            for re in np.linspace(-0.5, 1.2 * b, 40):
                z = complex(re, im)
                s = mp_boxtimes_stieltjes(nu, gamma, z)
                assert abs(s - quadratic_oracle(1.0, gamma, z)) < 1e-8

    def test_scaled_point_mass_identity(self):
        c, gamma = 2.0, 0.5
        for z in [0.5 + 1e-3j, 3.0 + 1e-2j, -1.0 + 0.1j]:
            s_c = mp_boxtimes_stieltjes(dirac(c), gamma, z)
            s_1 = mp_boxtimes_stieltjes(dirac(1.0), gamma, z / c)
            assert abs(s_c - s_1 / c) < 1e-8

    def test_scaled_point_mass_vs_monte_carlo(self):
        # k=1 covariance c*I realizes the delta_c input law
        c, gamma, n = 2.0, 0.5, 2000
        d = int(n / gamma)
        rng = np.random.default_rng(5)
        x = rng.standard_normal((n, d)) * np.sqrt(c)
        ev = np.linalg.eigvalsh(x @ x.T / d)
        nu = dirac(c)
        gd = mp_boxtimes_density(nu, gamma, st.default_grid(nu, gamma, 2001), 1e-4)
        from hadspec.metrics import ks_distance

        assert ks_distance(ev, lambda q: theoretical_cdf(gd, q)) < 0.05

    def test_herglotz_everywhere(self):
        rng = np.random.default_rng(23)
        for _ in range(15):
            k = rng.integers(1, 5)
            atoms = rng.uniform(0.05, 3.0, size=k)
            w = rng.uniform(0.1, 1, size=k)
            nu = atomic(atoms, w / w.sum())
            gamma = rng.uniform(0.2, 4.0)
            z = complex(rng.uniform(-1, 8), 10 ** rng.uniform(-4, 0))
            s = mp_boxtimes_stieltjes(nu, gamma, z)
            assert s.imag > 0
            assert (z * s).imag > 0

    def test_residual_contract(self):
        nu = atomic([1, 2, 3], [1 / 3, 1 / 3, 1 / 3])
        for z in [0.5 + 1e-4j, 4.0 + 1e-3j, 1e-4j]:
            s = mp_boxtimes_stieltjes(nu, 2.0, z)
            f = complex(st._rhs(nu.atoms, nu.weights, 2.0, np.array([z]), np.array([s]))[0])
            assert abs(f - s) / max(1.0, abs(s)) < 1e-10

    def test_solver_asymptotics(self):
        nu = atomic([0.5, 2.0], [0.5, 0.5])
        gamma = 2.0
        r = 1e4 * (1 + np.sqrt(gamma)) ** 2 * nu.max_atom
        s = mp_boxtimes_stieltjes(nu, gamma, 1j * r)
        assert abs(1j * r * s + 1.0) < 1e-3

    def test_rejects_bad_gamma_and_z(self):
        with pytest.raises(ValueError):
            mp_boxtimes_stieltjes(dirac(1.0), -1.0, 1j)
        with pytest.raises(ValueError):
            mp_boxtimes_stieltjes(dirac(1.0), 1.0, 1.0 - 1j)
        with pytest.raises(measure.MeasureError):
            mp_boxtimes_stieltjes(atomic([-1.0, 1.0], [0.5, 0.5]), 1.0, 1j)


class TestClosedForm:
    def test_support_edges(self):
        a, b = mp_support(1.0)
        assert (a, b) == (0.0, 4.0)

    def test_value_at_two(self):
        assert abs(mp_closed_form_density(1.0, 2.0) - 1 / (2 * np.pi)) < 1e-15

    def test_outside_support(self):
        assert mp_closed_form_density(1.0, 5.0) == 0.0
        assert mp_closed_form_density(1.0, -1.0) == 0.0

    def test_zero_atom_values(self):
        assert mp_zero_atom(4.0) == 0.75
        assert mp_zero_atom(0.5) == 0.0

    def test_integrates_to_continuous_mass(self):
        for gamma in [0.5, 1.0, 2.0]:
            a, b = mp_support(gamma)
            total = quad(lambda x: mp_closed_form_density(gamma, x), max(a, 0), b, limit=400)[0]
            assert abs(total - (1.0 - mp_zero_atom(gamma))) < 1e-6


class TestDensity:
    @pytest.mark.parametrize("gamma", [0.25, 0.5, 1.0, 2.0])
    def test_matches_closed_form_away_from_edges(self, gamma):
        nu = dirac(1.0)
        gd = mp_boxtimes_density(nu, gamma, st.default_grid(nu, gamma, 2001), 1e-4)
        a, b = mp_support(gamma)
        sel = (gd.xs >= a + 0.05) & (gd.xs <= b - 0.05)
        closed = np.array([mp_closed_form_density(gamma, x) for x in gd.xs[sel]])
        assert np.max(np.abs(gd.pdf[sel] - closed)) < 5e-3

    def test_value_near_two_gamma_one(self):
        nu = dirac(1.0)
        xs = np.linspace(0.0, 4.5, 2001)
        gd = mp_boxtimes_density(nu, 1.0, xs, 1e-4)
        j = int(np.argmin(np.abs(xs - 2.0)))
        assert abs(gd.pdf[j] - 1 / (2 * np.pi)) < 2e-3

    def test_gamma4_zero_atom_exact(self):
        nu = dirac(1.0)
        gd = mp_boxtimes_density(nu, 4.0, st.default_grid(nu, 4.0, 2001), 1e-4)
        assert gd.zero_atom == 0.75

    def test_total_mass(self):
        laws = [
            (dirac(1.0), 0.5),
            (atomic([1, 2, 3], [1 / 3, 1 / 3, 1 / 3]), 2.0),
            (mult_convolve(atomic([1, 2], [0.5, 0.5]), atomic([1, 2, 3], [1 / 3] * 3)), 0.25),
        ]
        for nu, gamma in laws:
            gd = mp_boxtimes_density(nu, gamma, st.default_grid(nu, gamma, 2001), 1e-4)
            mass = gd.zero_atom + np.trapezoid(gd.pdf, gd.xs)
            assert 0.995 <= mass <= 1.005
            assert 0.995 <= gd.cdf[-1] <= 1.005

    def test_grid_coverage_detection(self):
        nu = dirac(1.0)
        xs = np.linspace(0.0, 2.0, 400)  # gamma=1 support runs to 4
        with pytest.raises(ValueError, match="cover"):
            mp_boxtimes_density(nu, 1.0, xs, 1e-4)

    def test_eta_range_enforced(self):
        nu = dirac(1.0)
        xs = st.default_grid(nu, 1.0, 100)
        for eta in (1e-7, 0.5):
            with pytest.raises(ValueError):
                mp_boxtimes_density(nu, 1.0, xs, eta)

    def test_mixed_zero_atom_rank_rule(self):
        # nu with mass at 0: atom of the mapped law follows the rank formula
        nu = atomic([0.0, 2.0], [0.5, 0.5])
        assert st.boxtimes_zero_atom(nu, 4.0) == 1.0 - 0.5 / 4.0
        assert st.boxtimes_zero_atom(nu, 0.4) == 0.0


@pytest.fixture(scope="module")
def mp2():
    nu = dirac(1.0)
    return mp_boxtimes_density(nu, 2.0, st.default_grid(nu, 2.0, 2001), 1e-4)


class TestCdfAndQuantile:

    def test_below_grid_negative_is_zero(self, mp2):
        assert theoretical_cdf(mp2, -0.5) == 0.0

    def test_above_grid_is_one(self, mp2):
        assert abs(theoretical_cdf(mp2, 100.0) - 1.0) < 5e-3

    def test_atom_included_at_zero(self, mp2):
        assert abs(theoretical_cdf(mp2, 0.0) - 0.5) < 1e-12

    def test_gamma4_atom_at_zero(self):
        nu = dirac(1.0)
        gd = mp_boxtimes_density(nu, 4.0, st.default_grid(nu, 4.0, 2001), 1e-4)
        assert abs(theoretical_cdf(gd, 0.0) - 0.75) < 1e-12

    def test_quantile_inverts_cdf(self, mp2):
        for u in [0.55, 0.7, 0.9, 0.99]:
            x = law_quantile(mp2, u)
            assert abs(theoretical_cdf(mp2, x) - u) < 5e-3

    def test_quantile_atom_region_is_zero(self, mp2):
        assert law_quantile(mp2, 0.25) == 0.0
        assert law_quantile(mp2, 0.49) == 0.0


class TestGridDensityValidation:
    def test_rejects_decreasing_grid(self):
        with pytest.raises(ValueError):
            GridDensity(np.array([0.0, 1.0, 0.5]), np.zeros(3), np.array([1.0, 1.0, 1.0]), 0.0)

    def test_rejects_negative_pdf(self):
        with pytest.raises(ValueError):
            GridDensity(np.array([0.0, 1.0]), np.array([-0.1, 0.1]), np.array([1.0, 1.0]), 0.0)

    def test_rejects_mass_defect(self):
        xs = np.linspace(0, 1, 11)
        pdf = np.full(11, 0.5)
        cdf = 0.5 * xs
        with pytest.raises(ValueError):
            GridDensity(xs, pdf, cdf, 0.0)


class TestSerialization:
    def test_csv_and_sidecar(self, tmp_path):
        nu = dirac(1.0)
        gd = mp_boxtimes_density(nu, 2.0, st.default_grid(nu, 2.0, 501), 1e-4)
        st.density_to_csv(gd, tmp_path / "density.csv")
        st.density_sidecar_to_json(gd, nu, 2.0, 1e-4, tmp_path / "theory.json")
        lines = (tmp_path / "density.csv").read_text().splitlines()
        assert lines[0] == "x,pdf,cdf"
        assert len(lines) == 502
        import json

        side = json.loads((tmp_path / "theory.json").read_text())
        assert side["zero_atom"] == 0.5
        assert side["gamma"] == 2.0
        assert side["nu_atoms"] == [1.0]
