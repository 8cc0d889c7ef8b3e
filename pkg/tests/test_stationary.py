import numpy as np
import pytest

from sectorprop.errors import EigenvalueSearchError, ModelError
from sectorprop.mesh import build_mesh
from sectorprop.potential import problem3
from sectorprop.stationary import (Basis, StepReference, build_references,
                                   compute_basis, default_matching_node,
                                   shoot, transfer_step)


def _dense_node_count(vbar, e, x_min, x_max, mass=1.0, n=40000):
    """Brute-force Sturm count: fixed-step RK4 on y'' = 2m(V-E)y from the
    left boundary, counting interior sign changes on a dense grid."""
    h = (x_max - x_min) / n
    y, dy = 0.0, 1.0
    count = 0
    prev_sign = 0
    x = x_min
    for i in range(n):
        def f(xv, yv, dv):
            return dv, 2.0 * mass * (vbar(xv) - e) * yv
        k1 = f(x, y, dy)
        k2 = f(x + h / 2, y + h / 2 * k1[0], dy + h / 2 * k1[1])
        k3 = f(x + h / 2, y + h / 2 * k2[0], dy + h / 2 * k2[1])
        k4 = f(x + h, y + h * k3[0], dy + h * k3[1])
        y += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        dy += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        x += h
        m = max(abs(y), abs(dy))
        if m > 1e100:
            y /= m
            dy /= m
        if i < n - 1:
            s = 0 if y == 0 else (1 if y > 0 else -1)
            if s != 0:
                if prev_sign != 0 and s != prev_sign:
                    count += 1
                prev_sign = s
    return count


class TestReferences:
    def test_constant_potential(self):
        mesh = build_mesh(-2.0, 2.0, 8)
        refs = build_references(lambda x: np.full_like(x, 3.25), mesh)
        assert np.allclose(refs.vbar, 3.25, atol=0)
        assert np.allclose(refs.v1, 0.0, atol=1e-15)

    def test_linear_potential(self):
        mesh = build_mesh(0.0, 1.0, 1)
        refs = build_references(lambda x: x, mesh)
        assert refs.vbar[0] == pytest.approx(0.5, abs=1e-15)
        # P1* component of a linear ramp over the unit step is half the rise
        assert refs.v1[0] == pytest.approx(0.5, abs=1e-15)

    def test_quadratic_average(self):
        # 4-point Lobatto average of x^2 on [-1, 1] is exact: 1/3
        mesh = build_mesh(-1.0, 1.0, 1)
        refs = build_references(lambda x: x ** 2, mesh)
        assert refs.vbar[0] == pytest.approx(1.0 / 3.0, rel=1e-15)

    def test_non_finite_rejected(self):
        mesh = build_mesh(-1.0, 1.0, 2)
        with pytest.raises(ModelError):
            build_references(lambda x: np.where(x > 0, np.inf, 1.0), mesh)


class TestTransferStep:
    def test_threshold_limit(self):
        # E = Vbar: free particle at threshold, sheared identity
        ref = StepReference(vbar=2.0, v1=0.0, h=0.3, mass=1.0)
        t = transfer_step(2.0, ref, order=2)
        assert np.allclose(t, [[1.0, 0.3], [0.0, 1.0]], atol=1e-15)

    def test_zero_perturbation_orders_agree(self):
        ref = StepReference(vbar=1.0, v1=0.0, h=0.25, mass=1.0)
        t2 = transfer_step(0.3, ref, order=2)
        t4 = transfer_step(0.3, ref, order=4)
        assert np.allclose(t2, t4, atol=0)

    def test_half_wave_rotation(self):
        # 2 mu (Vbar - E) h^2 = -pi^2: half a wavelength fits the step
        h = 0.5
        e = np.pi ** 2 / (2 * h * h)
        ref = StepReference(vbar=0.0, v1=0.0, h=h, mass=1.0)
        t = transfer_step(e, ref, order=2)
        assert np.allclose(t, [[-1.0, 0.0], [0.0, -1.0]], atol=1e-14)

    @pytest.mark.parametrize("e", [-3.0, 0.1, 7.7, 40.0])
    def test_order2_unit_determinant(self, e):
        ref = StepReference(vbar=1.5, v1=0.0, h=0.4, mass=1.0)
        t = transfer_step(e, ref, order=2)
        assert np.linalg.det(t) == pytest.approx(1.0, abs=1e-12)

    def _dense_linear_model(self, ref, e, n=4000):
        h = ref.h / n
        m = np.eye(2)
        for i in range(n):
            def rhs(x, mat):
                p = 2.0 * ref.mass * (ref.vbar
                                      + ref.v1 * (2 * x / ref.h - 1.0) - e)
                return np.array([mat[1], p * mat[0]])
            x = i * h
            k1 = rhs(x, m)
            k2 = rhs(x + h / 2, m + h / 2 * k1)
            k3 = rhs(x + h / 2, m + h / 2 * k2)
            k4 = rhs(x + h, m + h * k3)
            m = m + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return m

    def test_order4_against_dense_integration(self):
        # brute-force oracle: RK4 on the linear-reference model; the single
        # correction leaves a defect of the order of the correction squared
        ref = StepReference(vbar=1.0, v1=0.4, h=0.2, mass=1.0)
        dense = self._dense_linear_model(ref, 0.35)
        t4 = transfer_step(0.35, ref, order=4)
        t2 = transfer_step(0.35, ref, order=2)
        assert np.abs(t4 - dense).max() < 0.05 * np.abs(t2 - dense).max()
        assert np.abs(t4 - dense).max() < 1e-3

    def test_order4_defect_shrinks_with_step(self):
        # refit over half the step: the residual drops by ~2^6 per half
        errs = []
        for h, v1 in ((0.2, 0.4), (0.1, 0.2)):
            ref = StepReference(vbar=1.0, v1=v1, h=h, mass=1.0)
            dense = self._dense_linear_model(ref, 0.35)
            t4 = transfer_step(0.35, ref, order=4)
            errs.append(np.abs(t4 - dense).max())
        assert errs[0] / errs[1] > 2 ** 5


class TestShoot:
    def setup_method(self):
        self.mesh = build_mesh(-10.0, 10.0, 100)
        self.refs = build_references(lambda x: 0.5 * x * x, self.mesh)
        self.match = default_matching_node(self.refs, self.mesh)

    def test_ground_state_mismatch(self):
        w0, c0 = shoot(0.5, self.refs, self.mesh, self.match)
        wa, _ = shoot(0.4, self.refs, self.mesh, self.match)
        wb, _ = shoot(0.6, self.refs, self.mesh, self.match)
        assert c0 == 0
        assert abs(w0) < 1e-3 * max(abs(wa), abs(wb))
        assert np.sign(wa) != np.sign(wb)

    def test_below_well_no_nodes(self):
        w, c = shoot(-5.0, self.refs, self.mesh, self.match)
        assert c == 0
        assert abs(w) > 0.0

    def test_count_between_eigenvalues(self):
        _, c = shoot(1.0, self.refs, self.mesh, self.match)
        assert c == 1

    @pytest.mark.parametrize("e,expected", [(0.2, 0), (1.2, 1), (2.9, 3),
                                            (5.7, 6), (9.1, 9)])
    def test_count_against_dense_oracle(self, e, expected):
        _, c = shoot(e, self.refs, self.mesh, self.match)
        dense = _dense_node_count(lambda x: 0.5 * x * x, e, -10.0, 10.0)
        assert c == dense == expected


class TestComputeBasis:
    def test_harmonic_spectrum(self):
        mesh = build_mesh(-10.0, 10.0, 100)
        basis = compute_basis(lambda x: 0.5 * x * x, mesh, 8)
        exact = np.arange(1, 9) - 0.5
        assert np.abs(basis.energies - exact).max() < 1e-8

    def test_morse_ground_state(self):
        p = problem3()
        d, a, mass = p.params["D"], p.params["alpha"], p.params["mass"]
        omega0 = p.params["omega0"]
        mesh = build_mesh(p.x_min, p.x_max, 64)
        basis = compute_basis(p.model.separable.static, mesh, 1, mass=mass)
        exact = omega0 * 0.5 - omega0 ** 2 * 0.25 / (4 * d)
        assert basis.energies[0] == pytest.approx(exact, abs=1e-8 * d)

    def test_orthonormal_gram(self, harmonic_basis_small):
        basis, _ = harmonic_basis_small
        g = basis.gram()
        assert np.abs(g - np.eye(basis.size)).max() < 1e-8

    def test_dirichlet_ends_and_sign_convention(self, harmonic_basis_small):
        basis, _ = harmonic_basis_small
        for p in basis.pairs:
            assert p.y[0] == 0.0 and p.y[-1] == 0.0
            assert p.dy[0] > 0.0

    def test_interior_node_counts(self, harmonic_basis_small):
        basis, _ = harmonic_basis_small
        for p in basis.pairs:
            interior = p.y[1:-1]
            signs = np.sign(interior[interior != 0])
            changes = int(np.count_nonzero(signs[1:] != signs[:-1]))
            assert changes == p.index - 1

    def test_eigenvalues_strictly_increasing(self, harmonic_basis_small):
        basis, _ = harmonic_basis_small
        assert np.all(np.diff(basis.energies) > 0)

    @pytest.mark.parametrize("order,expected", [(2, 2.0), (4, 4.0)])
    def test_convergence_order(self, order, expected):
        # bare per-step scheme (no internal refinement): E error slope in dx
        errs = []
        for n in (50, 100, 200, 400):
            mesh = build_mesh(-10.0, 10.0, n)
            basis = compute_basis(lambda x: 0.5 * x * x, mesh, 3, order=order,
                                  n_refine=1)
            errs.append(abs(basis.energies[2] - 2.5))
        slopes = np.diff(np.log(errs)) / np.log(0.5)
        assert abs(np.mean(slopes) - expected) < 0.5

    def test_search_failure_reports_bracket(self):
        mesh = build_mesh(-1.0, 1.0, 4)
        with pytest.raises(EigenvalueSearchError) as err:
            compute_basis(lambda x: np.zeros_like(x), mesh, 0)
        assert err.value.index == 0
