from __future__ import annotations

import math

import numpy as np
import pytest

from fracsource.errors import FractionalDomainError, UsageError
from fracsource.presets import Poly, mms_generate


@pytest.fixture(scope="module")
def mode1():
    mms = mms_generate("mode1", 0.5)
    return mms, mms.data.sample(17, 9, 4)


def test_poly_caputo_power_rule():
    p = Poly((3.0, 2.0, 1.0))  # 3 + 2t + t^2
    t = np.array([0.0, 0.25, 1.0])
    a = 0.4
    expected = 2 * t ** (1 - a) / math.gamma(2 - a) + 2 * t ** (2 - a) / math.gamma(3 - a)
    np.testing.assert_allclose(p.caputo(t, a), expected, rtol=1e-14)
    np.testing.assert_allclose(p(t), 3 + 2 * t + t**2)


def test_mode1_psi(mode1):
    _, p = mode1
    t, x = p.tgrid.nodes[:, None], p.xgrid.nodes[None, :]
    np.testing.assert_allclose(p.psi, math.pi / 2 * (1 + t**2) * np.sin(math.pi * x), rtol=1e-14)


def test_mode1_source_closed_form(mode1):
    # g = D^a u* - u*_xx - u*_yy - f h*, written out independently
    _, p = mode1
    t = p.tgrid.nodes[:, None, None]
    x = p.xgrid.nodes[None, :, None]
    y = p.basis.points[0][None, None, :]
    dt = 2 * t**1.5 / math.gamma(2.5)
    s = np.sin(math.pi * x) * np.sin(y)
    g = dt * s + (math.pi**2 + 1) * (1 + t**2) * s - s
    np.testing.assert_allclose(p.g, g, atol=1e-13)


def test_mode1_exact_pair(mode1):
    mms, p = mode1
    h = mms.h_exact(p.tgrid, p.xgrid)
    np.testing.assert_allclose(h, np.broadcast_to(np.sin(math.pi * p.xgrid.nodes), h.shape))
    c = mms.exact_coeffs(p.tgrid, p.xgrid, p.basis)
    # reconstructing physical values from modes matches u* on the quadrature nodes
    u = c @ p.basis.values
    t, x, y = p.tgrid.nodes[:, None, None], p.xgrid.nodes[None, :, None], p.basis.points[0][None, None, :]
    np.testing.assert_allclose(u, mms.u_exact(t, x, y), atol=1e-13)


def test_two_mode_excites_modes_one_and_three():
    mms = mms_generate("two-mode", 0.7)
    p = mms.data.sample(9, 9, 6)
    c = mms.exact_coeffs(p.tgrid, p.xgrid, p.basis)
    active = np.flatnonzero(np.abs(c).max(axis=(0, 1)) > 0)
    assert active.tolist() == [0, 2]
    # Dirichlet-compatible x-profiles
    assert np.max(np.abs(c[:, [0, -1], :])) < 1e-15
    assert np.max(np.abs(p.phi_k[:, 2])) < 1e-15  # t^2 term vanishes initially


def test_two_mode_compatibility():
    p = mms_generate("two-mode", 0.5).data.sample(9, 9, 6)
    moment = p.basis.integrate(p.phi * p.omega)
    np.testing.assert_allclose(moment, p.psi[0], atol=1e-13)


def test_zero_preset():
    mms = mms_generate("zero", 0.5)
    p = mms.data.sample(9, 9, 3)
    for arr in (p.g, p.phi, p.psi, p.dalpha_psi, p.lap_x_psi):
        assert np.all(arr == 0)
    assert np.all(mms.h_exact(p.tgrid, p.xgrid) == 0)
    assert np.all(mms.exact_coeffs(p.tgrid, p.xgrid, p.basis) == 0)


def test_unknown_preset():
    with pytest.raises(UsageError):
        mms_generate("three-mode", 0.5)


@pytest.mark.parametrize("alpha", [0.0, 1.5, float("nan")])
def test_bad_order(alpha):
    with pytest.raises(FractionalDomainError):
        mms_generate("mode1", alpha)


def test_bad_horizon():
    with pytest.raises(UsageError):
        mms_generate("mode1", 0.5, T=0.0)
