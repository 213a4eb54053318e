r"""Recovery of the source coefficient ``h(t, x)`` from the integral measurement
:math:`\int_\Omega u(t,x,y)\,\omega(y)\,dy = \psi(t,x)`.

Pairing the equation with :math:`\omega` eliminates the unknown from the
y-direction and gives

.. math::

    h = \frac{D_t^\alpha\psi - \partial_x^2\psi - (g,\omega) + \sum_j \gamma_j u_j}{(f,\omega)},
    \qquad \gamma_j = \lambda_j (v_j, \omega),

since Green's identity gives :math:`(\Delta_y u, \omega) = -\sum_j \gamma_j u_j`.

Substituting this into the modal equations gives a linear fixed-point
problem for the coefficients ``u_k``, solved by successive approximations
from ``u^0 = 0``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from fracsource.errors import (
    ConditionViolationError,
    DenominatorDegeneracyError,
    IterationDivergenceError,
    NoConvergenceError,
    SeriesDivergenceError,
)
from fracsource.forward import (
    SampledProblem,
    SpectralField,
    caputo_in_time,
    second_difference,
    solve_modes,
)
from fracsource.fracops import mittag_leffler
from fracsource.spectral import c_epsilon, gradient_pairing, tau_norm, two_tau

log = logging.getLogger(__name__)

DENOMINATOR_REL = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls. ``delta=None`` picks a floor relative to the data scale."""

    K: int = 16
    epsilon: float = 0.5
    max_iters: int = 60
    tol_rel: float = 1e-12
    delta: float | None = None
    workers: int = 1
    divergence_patience: int = 3
    compat_tol: float = 1e-6
    dalpha_psi: str = "auto"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.tol_rel > 0:
            raise ValueError("tol_rel must be positive")
        if self.delta is not None and not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.dalpha_psi not in ("auto", "analytic", "l1"):
            raise ValueError(f"dalpha_psi must be auto, analytic or l1, got {self.dalpha_psi!r}")


@dataclass
class ConditionsReport:
    f0: float
    g0: float
    psi0: float
    c_eps_partial: float
    c_eps_tail: float
    two_tau: float
    M: float
    M_alpha: float
    grad_omega_sq: float
    f_tau_max: float
    f_star: float
    g_star: float
    phi_star: float
    kappa: float
    A0: float
    A1: float
    f_l2_omega_max: float
    compat_residual: float
    omega_trace: float
    delta: float
    denominator_min: float
    dalpha_source: str
    flags: dict = field(default_factory=dict)
    messages: list = field(default_factory=list)

    @property
    def c_eps(self) -> float:
        return self.c_eps_partial + self.c_eps_tail

    @property
    def kappa_band(self) -> str:
        if not math.isfinite(self.kappa):
            return "undefined"
        if self.kappa <= 0.5:
            return "guaranteed"
        if self.kappa <= 1.0:
            return "marginal"
        return "violated"

    @property
    def hard_ok(self) -> bool:
        return all(self.flags.get(key, False) for key in ("denominator", "epsilon", "compatibility", "finite"))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["c_eps"] = self.c_eps
        out["kappa_band"] = self.kappa_band
        out["hard_ok"] = self.hard_ok
        return {k: _jsonable(v) for k, v in out.items()}


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return _jsonable(value.item())
    return value


def psi_derivatives(problem: SampledProblem, mode: str = "auto") -> tuple[np.ndarray, np.ndarray, str]:
    """Return ``(D^alpha psi, psi_xx, source)``; analytic forms are used when available and allowed."""
    if mode == "analytic" and (problem.dalpha_psi is None or problem.lap_x_psi is None):
        raise ValueError("analytic psi derivatives requested but not supplied")
    use_analytic = mode in ("auto", "analytic") and problem.dalpha_psi is not None
    if use_analytic:
        dpsi, source = problem.dalpha_psi, "analytic"
    else:
        dpsi, source = caputo_in_time(problem.psi, problem.tgrid, problem.alpha), "l1"
    if use_analytic and problem.lap_x_psi is not None:
        lap = problem.lap_x_psi
    else:
        lap = second_difference(problem.psi, problem.xgrid.dx, axis=1)
    return dpsi, lap, source


def default_delta(problem: SampledProblem) -> float:
    """Floor for the pairing ``(f, omega)``, relative to ``max ||f(t,x,.)|| ||omega||``."""
    f_norm = np.sqrt(np.max(problem.basis.integrate(problem.f**2)))
    om_norm = math.sqrt(float(problem.basis.integrate(problem.omega**2)))
    scale = float(f_norm) * om_norm
    return DENOMINATOR_REL * scale if scale > 0 else DENOMINATOR_REL


def growth_constant(alpha: float, T: float) -> float:
    """``max(E_alpha(3 T^alpha), Gamma(alpha) E_{alpha,alpha}(3 T^alpha))``; both are increasing in T."""
    z = 3.0 * T**alpha
    return max(float(mittag_leffler(alpha, 1.0, z)), math.gamma(alpha) * float(mittag_leffler(alpha, alpha, z)))


def check_conditions(problem: SampledProblem, epsilon: float = 0.5, delta: float | None = None,
                     dalpha_mode: str = "auto", compat_tol: float = 1e-6) -> ConditionsReport:
    """Evaluate every solvability constant; failures are flagged, never raised."""
    basis, xg, tg = problem.basis, problem.xgrid, problem.tgrid
    alpha, T = problem.alpha, tg.T
    flags, messages = {}, []

    delta = default_delta(problem) if delta is None else delta
    denom_min = float(np.min(np.abs(problem.f_omega)))
    flags["denominator"] = denom_min >= delta
    if not flags["denominator"]:
        messages.append(f"condition 1: |(f, omega)| falls to {denom_min:.3g} below the floor {delta:.3g}")
    f0 = 1.0 / denom_min if denom_min > 0 else math.inf
    g0 = float(np.max(np.abs(problem.g_omega)))
    dpsi, lap, source = psi_derivatives(problem, dalpha_mode)
    psi0 = float(np.max(np.abs(dpsi) + np.abs(lap)))

    try:
        ce = c_epsilon(basis, epsilon)
        flags["epsilon"] = True
    except SeriesDivergenceError as exc:
        ce = (math.inf, math.inf)
        flags["epsilon"] = False
        messages.append(f"condition 4: C_eps diverges ({exc})")

    eps_eff = epsilon if epsilon > 0 else 0.0
    M = growth_constant(alpha, T)
    M_alpha = M * T**alpha
    pairing = gradient_pairing(basis, problem.omega, problem.omega_grad)
    flags["omega_boundary"] = pairing.boundary_ok
    if not pairing.boundary_ok:
        messages.append(f"condition 7: omega has boundary trace {pairing.boundary_residual:.3g}")

    w = xg.weights
    f_tau_max = float(np.max(tau_norm(problem.f_k, basis, eps_eff)))
    f_star = float(np.max(tau_norm(problem.f_k, basis, eps_eff, w)))
    g_star = float(np.max(tau_norm(problem.g_k, basis, eps_eff, w)))
    phi_star = float(tau_norm(problem.phi_k, basis, eps_eff, w))
    c_eps = ce[0] + ce[1]
    kappa = M_alpha * c_eps * f0**2 * pairing.grad_norm_sq * f_tau_max
    src = f0**2 * (psi0 + g0) ** 2
    A0 = M * phi_star + M_alpha * src * f_star + M_alpha * g_star
    f_l2 = basis.integrate(problem.f**2)
    g_l2 = basis.integrate(problem.g**2)
    A1 = src * float(np.max(f_l2 @ w)) + float(np.max(g_l2 @ w))
    flags["kappa"] = kappa <= 1.0
    if not flags["kappa"]:
        messages.append(f"condition 4: smallness fails, kappa = {kappa:.4g} > 1")

    moment = basis.integrate(problem.phi * problem.omega)
    residual = float(math.sqrt(np.sum((moment - problem.psi[0]) ** 2 * w)))
    psi_scale = float(math.sqrt(np.sum(problem.psi[0] ** 2 * w)))
    flags["compatibility"] = residual <= compat_tol * max(1.0, psi_scale)
    if not flags["compatibility"]:
        messages.append(f"condition 7: int phi omega dy differs from psi(0, .) by {residual:.3g}")
    flags["finite"] = all(math.isfinite(v) for v in (g0, psi0, f_star, g_star, phi_star)) and f0 < math.inf

    return ConditionsReport(
        f0=f0, g0=g0, psi0=psi0, c_eps_partial=ce[0], c_eps_tail=ce[1], two_tau=two_tau(basis.dim, epsilon),
        M=M, M_alpha=M_alpha, grad_omega_sq=pairing.grad_norm_sq, f_tau_max=f_tau_max, f_star=f_star,
        g_star=g_star, phi_star=phi_star, kappa=kappa, A0=A0, A1=A1, f_l2_omega_max=float(np.max(f_l2)),
        compat_residual=residual, omega_trace=pairing.boundary_residual, delta=delta, denominator_min=denom_min,
        dalpha_source=source, flags=flags, messages=messages,
    )


@dataclass
class InverseContext:
    """Per-problem quantities shared by every iteration."""

    problem: SampledProblem
    gamma: np.ndarray
    base: np.ndarray
    weights_tau: np.ndarray
    delta: float
    dalpha_source: str

    @classmethod
    def build(cls, problem: SampledProblem, epsilon: float = 0.5, delta: float | None = None, dalpha_mode: str = "auto"):
        delta = default_delta(problem) if delta is None else delta
        _check_denominator(problem, delta)
        dpsi, lap, source = psi_derivatives(problem, dalpha_mode)
        gamma = problem.basis.eigenvalues * problem.omega_k
        base = (dpsi - lap - problem.g_omega) / problem.f_omega
        lam_w = problem.basis.eigenvalues ** two_tau(problem.basis.dim, max(epsilon, 0.0))
        return cls(problem, gamma, base, lam_w, delta, source)

    def h_of(self, coeffs: np.ndarray) -> np.ndarray:
        return self.base + (coeffs @ self.gamma) / self.problem.f_omega

    def weighted_norm(self, coeffs: np.ndarray) -> float:
        r"""``max_t sum_k lambda_k^{2 tau} ||c_k(t)||^2_{L2(G)}``."""
        per_t = np.einsum("tmk,k,m->t", coeffs**2, self.weights_tau, self.problem.xgrid.weights)
        return float(np.max(per_t))


def _check_denominator(problem: SampledProblem, delta: float):
    bad = np.abs(problem.f_omega) < delta
    if np.any(bad):
        ti, xi = np.nonzero(bad)
        where = [(float(problem.tgrid.nodes[a]), float(problem.xgrid.nodes[b])) for a, b in zip(ti[:20], xi[:20])]
        raise DenominatorDegeneracyError(
            f"condition 1: (f, omega) is below {delta:.3g} at {int(bad.sum())} grid nodes, first at t={where[0][0]:.4g}, x={where[0][1]:.4g}",
            where,
        )


def reconstruct_h(problem: SampledProblem, coeffs: np.ndarray, delta: float | None = None,
                  dalpha_mode: str = "auto") -> np.ndarray:
    """Source coefficient implied by modal coefficients ``coeffs`` of shape ``(N, M, K)``."""
    return InverseContext.build(problem, 0.5, delta, dalpha_mode).h_of(np.asarray(coeffs, dtype=float))


@dataclass
class IterationState:
    index: int
    u: np.ndarray
    u_prev: np.ndarray
    w: float
    h: np.ndarray

    @classmethod
    def initial(cls, problem: SampledProblem) -> IterationState:
        zero = np.zeros(problem.shape)
        return cls(0, zero, zero, 0.0, np.zeros(problem.shape[:2]))


def picard_step(state: IterationState, ctx: InverseContext, config: SolverConfig | None = None) -> IterationState:
    """One successive approximation: the source built from ``state.u`` drives every mode."""
    workers = 1 if config is None else config.workers
    p = ctx.problem
    h = ctx.h_of(state.u)
    if not np.all(np.isfinite(h)):
        raise IterationDivergenceError(f"non-finite coupling sum at iteration {state.index + 1}")
    rhs = p.g_k + p.f_k * h[:, :, None]
    new = solve_modes(rhs, p.phi_k, p.tgrid, p.xgrid, p.basis, p.alpha, workers)
    w = ctx.weighted_norm(new - state.u)
    return IterationState(state.index + 1, new, state.u, w, h)


@dataclass
class InverseResult:
    field: SpectralField
    h: np.ndarray
    report: ConditionsReport
    history: list[float]
    iterations: int
    warnings: list[str]

    @property
    def ratios(self) -> list[float]:
        hist = self.history
        return [hist[i + 1] / hist[i] if hist[i] > 0 else 0.0 for i in range(len(hist) - 1)]

    def diagnostics(self) -> dict:
        return _jsonable({
            "iterations": self.iterations,
            "w_history": list(self.history),
            "ratios": self.ratios,
            "warnings": list(self.warnings),
            "dalpha_source": self.report.dalpha_source,
        })


def inverse_solve(problem: SampledProblem, config: SolverConfig | None = None) -> InverseResult:
    """Run successive approximations to the stopping rule ``W_i <= tol_rel * W_1``."""
    config = config or SolverConfig(K=problem.basis.K)
    report = check_conditions(problem, config.epsilon, config.delta, config.dalpha_psi, config.compat_tol)
    if not report.hard_ok:
        raise ConditionViolationError("; ".join(report.messages) or "solvability requirements failed", report)
    warnings = []
    if report.kappa_band != "guaranteed":
        msg = f"kappa = {report.kappa:.4g} ({report.kappa_band}); contraction is not guaranteed"
        warnings.append(msg)
        log.warning(msg)
    if not report.flags.get("omega_boundary", True):
        warnings.append(f"omega does not vanish on the boundary (trace {report.omega_trace:.3g})")

    ctx = InverseContext.build(problem, config.epsilon, report.delta, config.dalpha_psi)
    state = IterationState.initial(problem)
    history: list[float] = []
    rising = 0
    converged = False
    while state.index < config.max_iters:
        state = picard_step(state, ctx, config)
        if not math.isfinite(state.w):
            raise IterationDivergenceError(f"weighted difference became {state.w} at iteration {state.index}", history)
        history.append(state.w)
        log.debug("iteration %d: W = %.6e", state.index, state.w)
        if history[0] == 0.0 or state.w <= config.tol_rel * history[0]:
            converged = True
            break
        if len(history) > 1 and state.w > history[-2]:
            rising += 1
            if rising >= config.divergence_patience:
                ratios = [history[i + 1] / history[i] for i in range(len(history) - 1)]
                raise IterationDivergenceError(
                    f"ratios exceeded 1 for {rising} consecutive iterations: {ratios[-rising:]}", ratios
                )
        else:
            rising = 0
    if not converged:
        raise NoConvergenceError(
            f"no convergence after {config.max_iters} iterations, last W = {history[-1]:.3e}", history[-1], history
        )
    h = ctx.h_of(state.u)
    field_ = SpectralField(state.u, problem.tgrid, problem.xgrid, problem.basis)
    return InverseResult(field_, h, report, history, state.index, warnings)


def weak_residual(field_: SpectralField, h: np.ndarray, problem: SampledProblem) -> float:
    """Largest residual of the discrete modal equations against hat functions in x.

    Tested against ``w_j(x) v_k(y)`` the equation reads
    ``dx * (D^alpha u_k - d_xx u_k + lambda_k u_k - r_k)`` at interior node ``j``.
    """
    u = field_.coeffs
    du = caputo_in_time(u, problem.tgrid, problem.alpha)
    uxx = second_difference(u, problem.xgrid.dx, axis=1)
    rhs = problem.g_k + problem.f_k * np.asarray(h)[:, :, None]
    res = du - uxx + problem.basis.eigenvalues * u - rhs
    return float(np.max(np.abs(res[1:, 1:-1, :]))) * problem.xgrid.dx


__all__ = [
    "ConditionsReport",
    "InverseContext",
    "InverseResult",
    "IterationState",
    "SolverConfig",
    "check_conditions",
    "growth_constant",
    "inverse_solve",
    "picard_step",
    "reconstruct_h",
    "weak_residual",
]
