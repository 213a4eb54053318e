"""Numerical checks of the proved inequalities and a contraction monitor.

Each check returns an :class:`EstimateCheck`; nothing here raises on a
violated bound, so callers can collect and report every result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from fracsource.errors import InsufficientHistoryError
from fracsource.forward import SampledProblem, SpectralField, caputo_in_time, gradient_energy_x
from fracsource.fracops import (
    SampledSignal,
    TimeGrid,
    caputo_l1,
    gronwall_bound,
    rl_integral,
    solve_linear_caputo_ode,
)
from fracsource.inverse import ConditionsReport
from fracsource.spectral import tau_norm

BOUND_RTOL = 1e-9


def _trapezoid(values: np.ndarray, dt: float) -> float:
    return float(dt * (values.sum() - 0.5 * (values[0] + values[-1])))


@dataclass(frozen=True)
class EstimateCheck:
    """``lhs <= rhs`` up to ``tolerance``; ``detail`` carries auxiliary numbers."""

    name: str
    lhs: float
    rhs: float
    tolerance: float = 0.0
    detail: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.margin >= -self.tolerance)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "margin": float(self.margin),
            "tolerance": float(self.tolerance),
            "passed": self.passed,
            "detail": {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in self.detail.items()},
        }


def _bound(name: str, lhs: float, rhs: float, **detail) -> EstimateCheck:
    return EstimateCheck(name, float(lhs), float(rhs), BOUND_RTOL * (1.0 + abs(rhs)), detail)


def validate_apriori(u: SpectralField, h: np.ndarray, problem: SampledProblem, report: ConditionsReport,
                     epsilon: float = 0.5) -> list[EstimateCheck]:
    """The four a priori bounds, evaluated with the solver's own quadratures."""
    tg, xg, basis = problem.tgrid, problem.xgrid, problem.basis
    T, alpha, dt = tg.T, problem.alpha, tg.dt
    w = xg.weights
    lam = basis.eigenvalues
    c = u.coeffs
    r = report
    coupling = r.c_eps * r.f0**2 * r.grad_omega_sq
    gamma_term = math.gamma(alpha) * T ** (1.0 - alpha) / 2.0

    tau_max = float(np.max(tau_norm(c, basis, epsilon, w)))
    checks = [_bound("tau_norm", tau_max, 2.0 * r.A0)]

    # gradient energy over Q: x-part from the piecewise-linear interpolant, y-part by Parseval
    grad_x = gradient_energy_x(np.moveaxis(c, 1, -1), xg.dx).sum(axis=-1)
    grad_y = (c**2 @ lam) @ w
    lhs_grad = _trapezoid(grad_x + grad_y, dt)
    phi_l2 = float(np.sum(problem.phi_k**2, axis=-1) @ w)
    rhs_grad = gamma_term * phi_l2 + 3.0 * r.A0 * T + 0.5 * T * r.A1 + T * r.A0 * coupling * r.f_l2_omega_max
    checks.append(_bound("gradient_energy", lhs_grad, rhs_grad))

    du = caputo_in_time(c, tg, alpha)
    lhs_d = _trapezoid(np.sum(du**2, axis=-1) @ w, dt)
    phi_grad = float(np.sum(gradient_energy_x(problem.phi_k.T, xg.dx))) + float((problem.phi_k**2 @ lam) @ w)
    f_l2 = basis.integrate(problem.f**2) @ w
    g_l2 = basis.integrate(problem.g**2) @ w
    src = r.f0**2 * (r.psi0 + r.g0) ** 2
    rhs_d = gamma_term * phi_grad + T * float(np.max(src * f_l2 + g_l2)) + 2.0 * r.A0 * coupling * r.f_l2_omega_max
    checks.append(_bound("caputo_energy", lhs_d, rhs_d))

    h_sq = float(np.max(np.asarray(h) ** 2 @ w))
    G = xg.length
    rhs_h = 4.0 * r.f0**2 * (G * r.psi0**2 + 2.0 * r.A0 * r.c_eps * r.grad_omega_sq) + 2.0 * G * r.g0**2
    checks.append(_bound("source_bound", h_sq, rhs_h))
    return checks


def _as_signal(v, grid: TimeGrid | None) -> SampledSignal:
    if isinstance(v, SampledSignal):
        return v
    if grid is None:
        raise ValueError("a time grid is needed to sample a callable")
    return SampledSignal.from_function(v, grid)


def lemma_j_residual(v: SampledSignal, alpha: float) -> float:
    r""":math:`\max_n |J^\alpha D^\alpha v - (v - v(0))|` at nodes ``n >= 1``."""
    d = caputo_l1(v, alpha)
    back = rl_integral(d, alpha).values
    return float(np.max(np.abs(back - (v.values - v.values[0]))[1:]))


def _subsampled_levels(v: SampledSignal) -> list[SampledSignal]:
    levels = [v]
    values = v.values
    while len(levels) < 3 and (values.size - 1) % 2 == 0 and values.size >= 9:
        values = values[::2]
        levels.insert(0, SampledSignal(TimeGrid(v.grid.T, values.size), values))
    return levels


def check_lemma_j(v: SampledSignal | Callable, alpha: float, T: float = 1.0,
                  levels: Sequence[int] = (65, 129, 257), order_tol: float = 1e-3) -> EstimateCheck:
    """Residual of ``J^alpha D^alpha v = v - v(0)`` under halving of the step.

    A callable is sampled on each grid in ``levels``; a sampled signal is
    coarsened by taking every second node. ``lhs`` is the required order and
    ``rhs`` the least-squares order of the residuals, so the check passes
    when the residuals decrease with order at least ``1 - order_tol``, or
    when they all sit at rounding level.
    """
    if isinstance(v, SampledSignal):
        signals = _subsampled_levels(v)
    else:
        signals = [_as_signal(v, TimeGrid(T, n)) for n in levels]
    res = np.array([lemma_j_residual(s, alpha) for s in signals])
    dts = np.array([s.grid.dt for s in signals])
    floor = 1e-12 * max(1.0, float(np.max(np.abs(signals[-1].values))))
    detail = {"residuals": res.tolist(), "dts": dts.tolist()}
    if np.all(res <= floor):
        return EstimateCheck("lemma_j", 0.0, 0.0, 0.0, {**detail, "order": None, "decreasing": True})
    required = 1.0 - order_tol
    if res.size < 2:
        return EstimateCheck("lemma_j", required, -1.0, 0.0, {**detail, "order": None, "decreasing": False})
    slope = float(np.polyfit(np.log(dts), np.log(np.maximum(res, 1e-300)), 1)[0])
    decreasing = bool(np.all(np.diff(res) < 0))
    observed = slope if decreasing else min(slope, 0.0)
    return EstimateCheck("lemma_j", required, observed, 0.0, {**detail, "order": slope, "decreasing": decreasing})


def check_alikhanov(w: SampledSignal, alpha: float, tol: float = 1e-12) -> EstimateCheck:
    r"""``w D^alpha w - D^alpha(w^2)/2 >= 0`` at every node past the first.

    The first node is skipped because the L1 value there is extrapolated.
    """
    lhs_terms = w.values * caputo_l1(w, alpha).values
    half_sq = 0.5 * caputo_l1(SampledSignal(w.grid, w.values**2), alpha).values
    gap = (lhs_terms - half_sq)[1:]
    worst = float(np.min(gap))
    return EstimateCheck("alikhanov", 0.0, worst, tol, {"node": int(np.argmin(gap)) + 1})


def check_gronwall(y0: float, c1: float, c2: SampledSignal, alpha: float) -> EstimateCheck:
    """L1 solution of ``D^alpha y = c1 y + c2`` against the Gronwall bound.

    The scheme error is estimated as ``2 |y_N - y_{2N}|`` from a solve on the
    halved step; the bound may be exceeded by at most that amount.
    """
    grid = c2.grid
    y = solve_linear_caputo_ode(y0, c1, c2, alpha).values
    fine_grid = TimeGrid(grid.T, 2 * grid.N - 1)
    fine_c2 = np.interp(fine_grid.nodes, grid.nodes, c2.values)
    y_fine = solve_linear_caputo_ode(y0, c1, SampledSignal(fine_grid, fine_c2), alpha).values[::2]
    est = 2.0 * np.abs(y - y_fine)
    bound = gronwall_bound(y0, c1, c2, alpha).values
    excess = y - bound - est
    k = int(np.argmax(excess))
    return EstimateCheck("gronwall", float(y[k] - est[k]), float(bound[k]), 1e-12 * (1.0 + abs(bound[k])),
                         {"node": k, "scheme_tolerance": float(est[k])})


def check_integral_chain(v: SampledSignal, alpha: float) -> list[EstimateCheck]:
    r"""Bracket :math:`\Gamma(\alpha) J^\alpha v` for positive ``v`` at every node.

    Lower: :math:`T^{\alpha-1}\int_0^t v \le \Gamma(\alpha) J^\alpha v(t)`.
    Upper: :math:`\Gamma(\alpha) J^\alpha v(t) \le T^\alpha \max v / \alpha`, because
    :math:`\int_0^t (t-s)^{\alpha-1} ds = t^\alpha/\alpha`. The factor ``1/alpha``
    is needed: ``v = 1`` attains it at ``t = T``.
    """
    T, dt = v.grid.T, v.grid.dt
    vals = v.values
    running = np.concatenate([[0.0], np.cumsum(0.5 * dt * (vals[1:] + vals[:-1]))])
    lower = T ** (alpha - 1.0) * running
    middle = math.gamma(alpha) * rl_integral(v, alpha).values
    upper = T**alpha * float(np.max(vals)) / alpha
    tol = BOUND_RTOL * (1.0 + upper)
    left = int(np.argmin(middle - lower))
    right = int(np.argmax(middle))
    return [
        EstimateCheck("chain_lower", float(lower[left]), float(middle[left]), tol, {"node": left}),
        EstimateCheck("chain_upper", float(middle[right]), upper, tol, {"node": right}),
    ]


@dataclass(frozen=True)
class ContractionSummary:
    rate: float
    classification: str
    kappa: float | None
    within_kappa: bool | None

    def to_dict(self) -> dict:
        return {"rate": self.rate, "classification": self.classification, "kappa": self.kappa,
                "within_kappa": self.within_kappa}


def contraction_monitor(history: Sequence[float], report: ConditionsReport | float | None = None,
                        band: float = 0.01, slack: float = 0.1) -> ContractionSummary:
    """Least-squares geometric rate of the weighted differences ``W_i``."""
    hist = np.asarray(history, dtype=float)
    if hist.size < 3:
        raise InsufficientHistoryError(f"need at least 3 iterates, got {hist.size}")
    kappa = report.kappa if isinstance(report, ConditionsReport) else report
    positive = hist > 0
    if not np.all(positive):
        # an exact zero means the iteration hit its fixed point
        rate = 0.0
    else:
        rate = float(math.exp(np.polyfit(np.arange(hist.size), np.log(hist), 1)[0]))
    if rate < 1.0 - band:
        label = "contracting"
    elif rate <= 1.0 + band:
        label = "stagnant"
    else:
        label = "diverging"
    within = None if kappa is None else bool(rate <= kappa + slack)
    return ContractionSummary(rate, label, None if kappa is None else float(kappa), within)
