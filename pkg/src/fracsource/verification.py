"""Property suites run by ``fracsource verify``.

Each entry is an :class:`EstimateCheck` where ``lhs`` is a measured error
or violation and ``rhs`` the tolerance it must stay under.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc

from fracsource.estimates import (
    EstimateCheck,
    check_alikhanov,
    check_gronwall,
    check_integral_chain,
    check_lemma_j,
)
from fracsource.fracops import SampledSignal, TimeGrid, l1_derivative, mittag_leffler, rl_quadrature
from fracsource.spectral import YDomain, c_epsilon, dirichlet_eigenpairs, weyl_constant

ORDERS = (0.3, 0.5, 0.8)


def random_trig_signal(rng: np.random.Generator, grid: TimeGrid, terms: int = 4) -> SampledSignal:
    t = grid.nodes
    values = rng.normal() + sum(
        rng.normal() * np.sin(rng.uniform(0.5, 6.0) * t + rng.uniform(0, 2 * np.pi)) for _ in range(terms)
    )
    return SampledSignal(grid, values)


def _err(name: str, error: float, tol: float, **detail) -> EstimateCheck:
    return EstimateCheck(name, float(error), float(tol), 0.0, detail)


def fracops_suite(rng: np.random.Generator) -> list[EstimateCheck]:
    out = []
    for a in ORDERS:
        c = check_lemma_j(np.sin, a)
        out.append(EstimateCheck(f"lemma_j[alpha={a}]", c.lhs, c.rhs, c.tolerance, c.detail))
    grid = TimeGrid(1.0, 129)
    for a in ORDERS:
        worst = min(check_alikhanov(random_trig_signal(rng, grid), a).rhs for _ in range(100))
        out.append(EstimateCheck(f"alikhanov[alpha={a}]", 0.0, worst, 1e-12))
    out.append(_err("ml_exp", abs(float(mittag_leffler(1.0, 1.0, 1.0)) - math.e), 1e-10))
    out.append(_err("ml_erfc", abs(float(mittag_leffler(0.5, 1.0, -1.0)) - math.e * erfc(1.0)), 1e-8))
    worst = max(
        abs(float(mittag_leffler(a, m, 0.0)) * math.gamma(m) - 1.0)
        for a in np.linspace(0.2, 1.0, 5)
        for m in np.linspace(0.5, 2.5, 5)
    )
    out.append(_err("ml_origin", worst, 1e-12))
    # power rule D^a t^2 = 2 t^{2-a} / Gamma(3-a), second-order exact away from the head
    fine = TimeGrid(1.0, 1025)
    t = fine.nodes
    d = l1_derivative(t**2, fine.dt, 0.5)
    exact = 2.0 * t**1.5 / math.gamma(2.5)
    out.append(_err("l1_power_rule", float(np.max(np.abs(d - exact)[1:])), 5e-3))
    j1 = rl_quadrature(np.ones(fine.N), fine.dt, 0.5)
    out.append(_err("rl_constant", float(np.max(np.abs(j1 - t**0.5 / math.gamma(1.5)))), 1e-12))
    for a in (0.3, 0.5, 0.8, 1.0):
        worst = -math.inf
        for _ in range(5):
            y0, c1 = rng.uniform(0, 2), rng.uniform(0, 3)
            c2 = SampledSignal(grid, np.full(grid.N, rng.uniform(0, 2)))
            worst = max(worst, -check_gronwall(y0, c1, c2, a).margin)
        out.append(EstimateCheck(f"gronwall[alpha={a}]", worst, 0.0, 1e-12))
    for a in ORDERS:
        v = SampledSignal(grid, 1.5 + np.sin(rng.uniform(1, 5) * grid.nodes))
        for c in check_integral_chain(v, a):
            out.append(EstimateCheck(f"{c.name}[alpha={a}]", c.lhs, c.rhs, c.tolerance, c.detail))
    return out


def spectral_suite() -> list[EstimateCheck]:
    out = []
    b = dirichlet_eigenpairs(YDomain.interval(), 16)
    gram = (b.values * b.weights) @ b.values.T
    out.append(_err("orthonormality", float(np.max(np.abs(gram - np.eye(b.K)))), 1e-10))
    grad = b.gradient(b.points)[:, 0, :]
    ggram = (grad * b.weights) @ grad.T
    out.append(_err("gradient_identity", float(np.max(np.abs(ggram - np.diag(b.eigenvalues)))), 1e-6))
    big = dirichlet_eigenpairs(YDomain.interval(), 10_000)
    ce = c_epsilon(big, 0.5)
    target = math.pi**2 / 6
    out.append(EstimateCheck("c_eps_lower", ce.partial, target, 0.0))
    out.append(EstimateCheck("c_eps_upper", target, ce.upper, 0.0))
    out.append(_err("c_eps_gap", ce.upper - ce.partial, 1e-4 + 1e-12))
    box = dirichlet_eigenpairs(YDomain.box(math.pi, 2.0), 40)
    ratio = box.eigenvalues / np.arange(1, 41) / weyl_constant(box.domain)
    out.append(_err("weyl_factor", float(np.max(np.abs(np.log2(ratio)))), 1.0))
    bgram = (box.values * box.weights) @ box.values.T
    out.append(_err("box_orthonormality", float(np.max(np.abs(bgram - np.eye(box.K)))), 1e-10))
    return out


def run_suites(seed: int = 0) -> list[EstimateCheck]:
    rng = np.random.default_rng(seed)
    return fracops_suite(rng) + spectral_suite()
