import numpy as np
import pytest

from sectorprop.errors import ConfigError
from sectorprop.mesh import build_mesh
from sectorprop.potential import problem1
from sectorprop.reference import (analytic_problem1, crank_nicolson_solve,
                                  err_abs, err_norm)


class TestAnalytic:
    def test_initial_time(self):
        p = problem1(3)
        x = np.linspace(-5, 5, 11)
        assert np.allclose(analytic_problem1(x, 0.0, 3), p.initial.psi0(x),
                           atol=1e-15)

    def test_pure_phase(self):
        x = np.linspace(-4, 4, 9)
        for t in (0.7, 2.0, 13.5):
            psi = analytic_problem1(x, t, 2)
            assert np.allclose(np.abs(psi), np.abs(analytic_problem1(x, 0.0, 2)),
                               atol=1e-14)

    def test_phase_value(self):
        t = 2 * np.pi
        psi = analytic_problem1(np.array([0.5]), t, 2)
        psi0 = analytic_problem1(np.array([0.5]), 0.0, 2)
        expect = np.exp(-5j * np.pi + 4j * np.pi ** 2)
        assert complex(psi[0] / psi0[0]) == pytest.approx(complex(expect),
                                                          rel=1e-12)


class TestCrankNicolson:
    def test_single_step_unitary(self):
        p = problem1(1)
        sol = crank_nicolson_solve(p, dx=0.05, dt=0.05, t_final=0.05)
        assert sol.norm_drift <= 1e-13 * np.linalg.norm(sol.psi)

    def test_norm_conserved_over_trajectory(self):
        p = problem1(2)
        sol = crank_nicolson_solve(p, dx=0.1, dt=0.05, t_final=2.0)
        z = sol.psi[1:-1]
        norm0 = np.linalg.norm(p.initial.psi0(sol.x[1:-1]))
        assert abs(np.linalg.norm(z) - norm0) <= 1e-12 * norm0

    def test_free_delta_stays_symmetric(self):
        # V = 0 and a grid delta: the stencil is symmetric about the site
        from sectorprop.potential import PotentialModel, ProblemSpec, InitialState
        n_mid = 100

        def delta_init(x):
            out = np.zeros(len(np.asarray(x)), dtype=complex)
            out[n_mid] = 1.0
            return out

        p = ProblemSpec(
            model=PotentialModel(mass=1.0,
                                 value=lambda x, t: np.zeros_like(
                                     np.asarray(x, dtype=float))),
            initial=InitialState(psi0=delta_init, normalized=False),
            x_min=-5.0, x_max=5.0)
        sol = crank_nicolson_solve(p, dx=10.0 / 202, dt=0.01, t_final=0.1)
        z = sol.psi[1:-1]
        flipped = z[::-1]
        # interior index n_mid maps to grid center only if symmetric; the
        # delta sat at interior position n_mid of 201 points => center
        assert np.abs(z - flipped).max() <= 1e-12 * np.abs(z).max()

    def test_problem1_table_comparator(self):
        # desk-scale reproduction of the published CN error level
        p = problem1(2)
        sol = crank_nicolson_solve(p, dx=0.02, dt=0.02, t_final=2.0)
        exact = p.exact(sol.x, 2.0)
        e = err_abs(sol.psi, exact)
        assert e <= 5 * 3e-4
        assert e >= 3e-4 / 5

    def test_self_convergence_second_order(self):
        # dx^2-matched refinement: halve dt and dx together
        p = problem1(1)
        errs = []
        for step in (0.1, 0.05, 0.025):
            sol = crank_nicolson_solve(p, dx=step, dt=step, t_final=1.0)
            exact = p.exact(sol.x, 1.0)
            errs.append(err_abs(sol.psi, exact))
        slopes = np.diff(np.log(errs)) / np.log(0.5)
        assert 1.7 <= np.mean(slopes) <= 2.3

    def test_bad_grid_rejected(self):
        p = problem1(0)
        with pytest.raises(ConfigError):
            crank_nicolson_solve(p, dx=0.3, dt=0.1, t_final=1.0)
        with pytest.raises(ConfigError):
            crank_nicolson_solve(p, dx=0.1, dt=0.3, t_final=1.0)


class TestErrorMetrics:
    def test_err_norm_zero_for_identical(self):
        mesh = build_mesh(-10.0, 10.0, 50)
        p = problem1(0)
        psi = p.initial.psi0(mesh.nodes)
        assert err_norm(psi, psi, mesh) == 0.0

    def test_err_norm_scaled_state(self):
        mesh = build_mesh(-10.0, 10.0, 200)
        p = problem1(0)
        psi = p.initial.psi0(mesh.nodes)
        assert err_norm(np.sqrt(2.0) * psi, psi, mesh) == pytest.approx(
            1.0, abs=1e-8)

    def test_err_abs_examples(self):
        a = np.ones(5, dtype=complex)
        assert err_abs(a, a) == 0.0
        b = a.copy()
        b[3] += 1e-4
        assert err_abs(b, a) == pytest.approx(1e-4, rel=1e-12)
