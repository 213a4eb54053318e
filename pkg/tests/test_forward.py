from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracsource.errors import InvalidGridError, ShapeMismatchError
from fracsource.forward import (
    SpectralField,
    XGrid,
    caputo_in_time,
    evaluate_overdetermination,
    forward_solve,
    gradient_energy_x,
    load_npz,
    save_npz,
    second_difference,
    solve_mode,
    solve_modes,
)
from fracsource.fracops import TimeGrid, mittag_leffler
from fracsource.presets import mms_generate
from fracsource.spectral import YDomain, dirichlet_eigenpairs


def relaxation_error(alpha, N, M, lam=1.0, discrete=False, T=1.0):
    """Error at t = T of one relaxing x-mode against its Mittag-Leffler oracle.

    The oracle is singular at t = 0, so the error is measured at the final
    time where the L1 scheme converges with order about 1.
    """
    tg, xg = TimeGrid(T, N), XGrid(M)
    x = xg.nodes
    u = solve_mode(lam, np.zeros((N, M)), np.sin(math.pi * x), tg, xg, alpha)
    mu = 4.0 / xg.dx**2 * math.sin(math.pi * xg.dx / 2) ** 2 if discrete else math.pi**2
    exact = float(mittag_leffler(alpha, 1.0, -(mu + lam) * T**alpha)) * np.sin(math.pi * x)
    return float(np.max(np.abs(u[-1] - exact)))


def order(errors, steps):
    return float(np.polyfit(np.log(steps), np.log(errors), 1)[0])


class TestGrids:
    def test_xgrid(self):
        g = XGrid(5)
        assert g.dx == 0.25
        np.testing.assert_array_equal(g.nodes, [0, 0.25, 0.5, 0.75, 1])
        assert g.weights.sum() == pytest.approx(1.0)

    def test_xgrid_too_small(self):
        with pytest.raises(InvalidGridError):
            XGrid(3)

    def test_second_difference_exact_on_cubics(self):
        x = np.linspace(0, 1, 9)
        v = x**3 - 2 * x**2
        np.testing.assert_allclose(second_difference(v, x[1] - x[0]), 6 * x - 4, atol=1e-10)

    def test_gradient_energy_linear(self):
        x = np.linspace(0, 1, 11)
        assert gradient_energy_x(3 * x, 0.1) == pytest.approx(9.0)


class TestSolveMode:
    def test_zero(self):
        tg, xg = TimeGrid(1.0, 17), XGrid(9)
        u = solve_mode(2.0, np.zeros((17, 9)), np.zeros(9), tg, xg, 0.5)
        assert np.all(u == 0)

    def test_bad_eigenvalue(self):
        tg, xg = TimeGrid(1.0, 5), XGrid(5)
        with pytest.raises(ValueError):
            solve_mode(0.0, np.zeros((5, 5)), np.zeros(5), tg, xg, 0.5)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            solve_mode(1.0, np.zeros((4, 5)), np.zeros(5), TimeGrid(1.0, 5), XGrid(5), 0.5)

    def test_dirichlet_ends(self):
        tg, xg = TimeGrid(1.0, 9), XGrid(9)
        u = solve_mode(1.0, np.ones((9, 9)), np.ones(9), tg, xg, 0.4)
        assert np.all(u[:, 0] == 0) and np.all(u[:, -1] == 0)

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
    def test_relaxation_accuracy(self, alpha):
        assert relaxation_error(alpha, 257, 65) < 2e-3

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
    def test_relaxation_time_order(self, alpha):
        # discrete eigenvalue isolates the time error; E_a(-c t^a) is singular at 0, so order ~1
        errs = [relaxation_error(alpha, n, 33, discrete=True) for n in (65, 129, 257)]
        assert errs[0] > errs[1] > errs[2]
        assert 0.85 <= order(errs, [1 / 64, 1 / 128, 1 / 256]) <= 2 - alpha + 0.3

    def test_relaxation_space_order(self):
        errs = [relaxation_error(0.5, 2049, m) for m in (9, 17, 33)]
        assert 1.7 <= order(errs, [1 / 8, 1 / 16, 1 / 32]) <= 2.3

    def test_backward_euler_limit(self):
        tg, xg = TimeGrid(0.5, 41), XGrid(17)
        rng = np.random.default_rng(3)
        rhs = rng.normal(size=(41, 17))
        phi = np.sin(math.pi * xg.nodes) + 0.3 * np.sin(3 * math.pi * xg.nodes)
        lam = 4.0
        u = solve_mode(lam, rhs, phi, tg, xg, 1.0)
        # independent dense backward Euler
        m = 15
        A = (np.diag(np.full(m, 2.0)) - np.diag(np.ones(m - 1), 1) - np.diag(np.ones(m - 1), -1)) / xg.dx**2
        A += lam * np.eye(m)
        S = np.eye(m) / tg.dt + A
        ref = np.zeros((41, 17))
        ref[0, 1:-1] = phi[1:-1]
        for n in range(1, 41):
            ref[n, 1:-1] = np.linalg.solve(S, ref[n - 1, 1:-1] / tg.dt + rhs[n, 1:-1])
        np.testing.assert_allclose(u, ref, atol=1e-12, rtol=0)

    @settings(max_examples=15, deadline=None)
    @given(alpha=st.floats(0.1, 1.0), seed=st.integers(0, 2**32 - 1))
    def test_linearity(self, alpha, seed):
        rng = np.random.default_rng(seed)
        tg, xg = TimeGrid(1.0, 9), XGrid(7)
        r1, r2 = rng.normal(size=(2, 9, 7))
        p1, p2 = rng.normal(size=(2, 7))
        a = solve_mode(2.5, r1, p1, tg, xg, alpha)
        b = solve_mode(2.5, r2, p2, tg, xg, alpha)
        c = solve_mode(2.5, 2 * r1 - r2, 2 * p1 - p2, tg, xg, alpha)
        np.testing.assert_allclose(c, 2 * a - b, atol=1e-11)


@pytest.fixture(scope="module")
def mode1():
    mms = mms_generate("mode1", 0.5)
    return mms, mms.data.sample(65, 33, 4)


class TestForwardSolve:
    def test_zero_field(self):
        p = mms_generate("zero", 0.5).data.sample(9, 9, 3)
        u = forward_solve(np.zeros((9, 9)), p)
        assert np.all(u.coeffs == 0)

    def test_manufactured(self, mode1):
        mms, p = mode1
        u = forward_solve(mms.h_exact(p.tgrid, p.xgrid), p)
        exact = mms.exact_coeffs(p.tgrid, p.xgrid, p.basis)
        rel = np.linalg.norm(u.coeffs - exact) / np.linalg.norm(exact)
        assert rel < 5e-3
        assert np.max(np.abs(u.coeffs[..., 1:])) < 1e-12

    def test_manufactured_time_order(self):
        mms = mms_generate("mode1", 0.5)
        errs = []
        for n in (17, 33, 65, 129):
            p = mms.data.sample(n, 1025, 2)
            u = forward_solve(mms.h_exact(p.tgrid, p.xgrid), p)
            errs.append(np.max(np.abs(u.coeffs - mms.exact_coeffs(p.tgrid, p.xgrid, p.basis))))
        assert 1.2 <= order(errs, [1 / 16, 1 / 32, 1 / 64, 1 / 128]) <= 1.8

    def test_manufactured_space_order(self):
        mms = mms_generate("mode1", 0.5)
        errs = []
        for m in (9, 17, 33):
            p = mms.data.sample(2049, m, 1)
            u = forward_solve(mms.h_exact(p.tgrid, p.xgrid), p)
            errs.append(np.max(np.abs(u.coeffs - mms.exact_coeffs(p.tgrid, p.xgrid, p.basis))))
        assert 1.7 <= order(errs, [1 / 8, 1 / 16, 1 / 32]) <= 2.3

    def test_reflection_symmetry(self):
        # mode1 data and h = t sin(pi x) are symmetric under x -> 1 - x
        p = mms_generate("mode1", 0.6).data.sample(33, 21, 6)
        h = p.tgrid.nodes[:, None] * np.sin(math.pi * p.xgrid.nodes)[None, :]
        u = forward_solve(h, p).coeffs
        np.testing.assert_allclose(u, u[:, ::-1, :], atol=1e-12, rtol=0)

    def test_l2_nonincreasing(self):
        rng = np.random.default_rng(0)
        basis = dirichlet_eigenpairs(YDomain.interval(), 6)
        tg, xg = TimeGrid(2.0, 65), XGrid(17)
        phi = np.abs(rng.normal(size=(17, 6)))
        phi[[0, -1]] = 0
        u = SpectralField(solve_modes(np.zeros((65, 17, 6)), phi, tg, xg, basis, 0.4), tg, xg, basis)
        norms = u.l2_norms()
        assert np.all(np.diff(norms) <= 1e-15)

    def test_mode_order_bit_identical(self, mode1):
        mms, p = mode1
        rng = np.random.default_rng(1)
        rhs = rng.normal(size=p.shape[:2] + (p.basis.K,))
        a = solve_modes(rhs, p.phi_k, p.tgrid, p.xgrid, p.basis, 0.5)
        b = solve_modes(rhs, p.phi_k, p.tgrid, p.xgrid, p.basis, 0.5, order=[3, 1, 0, 2])
        c = solve_modes(rhs, p.phi_k, p.tgrid, p.xgrid, p.basis, 0.5, workers=3)
        assert np.array_equal(a, b) and np.array_equal(a, c)

    def test_nonfinite_h(self, mode1):
        _, p = mode1
        h = np.zeros(p.shape[:2])
        h[3, 3] = np.nan
        with pytest.raises(ShapeMismatchError):
            forward_solve(h, p)


class TestOverdetermination:
    def test_zero(self):
        basis = dirichlet_eigenpairs(YDomain.interval(), 4)
        u = SpectralField(np.zeros((3, 5, 4)), TimeGrid(1.0, 3), XGrid(5), basis)
        assert np.all(evaluate_overdetermination(u, np.ones(4)) == 0)

    def test_manufactured(self):
        mms = mms_generate("mode1", 0.5)
        p = mms.data.sample(33, 17, 8)
        u = SpectralField(mms.exact_coeffs(p.tgrid, p.xgrid, p.basis), p.tgrid, p.xgrid, p.basis)
        psi = evaluate_overdetermination(u, p.omega_k)
        t, x = p.tgrid.nodes[:, None], p.xgrid.nodes[None, :]
        np.testing.assert_allclose(psi, math.pi / 2 * (1 + t**2) * np.sin(math.pi * x), atol=1e-12)

    def test_orthogonal_omega(self):
        basis = dirichlet_eigenpairs(YDomain.interval(), 4)
        c = np.zeros((3, 5, 4))
        c[..., 0] = 1.0
        u = SpectralField(c, TimeGrid(1.0, 3), XGrid(5), basis)
        assert np.all(evaluate_overdetermination(u, np.array([0, 1.0, 0, 2.0])) == 0)


class TestCaputoInTime:
    def test_matches_power_rule(self):
        tg = TimeGrid(1.0, 257)
        v = np.outer(tg.nodes**2, np.ones(3))
        d = caputo_in_time(v, tg, 0.5)
        exact = 2 * tg.nodes**1.5 / math.gamma(2.5)
        assert np.max(np.abs(d[1:, 0] - exact[1:])) < 1e-2


class TestNpz:
    def test_round_trip(self, tmp_path):
        mms = mms_generate("two-mode", 0.5)
        p = mms.data.sample(9, 9, 4)
        h = mms.h_exact(p.tgrid, p.xgrid)
        save_npz(tmp_path / "d.npz", p, h)
        q, h2 = load_npz(tmp_path / "d.npz", 4)
        np.testing.assert_array_equal(h, h2)
        for key in ("f", "g", "phi", "omega", "psi"):
            np.testing.assert_array_equal(getattr(p, key), getattr(q, key))
        assert q.alpha == 0.5 and q.tgrid.T == 1.0

    def test_wrong_basis(self, tmp_path):
        p = mms_generate("mode1", 0.5).data.sample(9, 9, 4)
        save_npz(tmp_path / "d.npz", p)
        with pytest.raises(ShapeMismatchError):
            load_npz(tmp_path / "d.npz", 8)

    def test_missing_keys(self, tmp_path):
        np.savez(tmp_path / "bad.npz", f=np.zeros(3))
        with pytest.raises(ShapeMismatchError):
            load_npz(tmp_path / "bad.npz", 2)
