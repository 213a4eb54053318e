r"""Forward solver for :math:`D_t^\alpha u - \Delta_x u - \Delta_y u = f h + g` on ``(0,T) x G x Omega``.

The y-direction is diagonalised by the Dirichlet eigenbasis; each mode

.. math::

    D_t^\alpha u_k - \partial_x^2 u_k + \lambda_k u_k = r_k, \qquad u_k(0,x) = \varphi_k(x),

is integrated with the implicit L1 scheme in time and central differences
on ``G = (0, 1)`` with homogeneous Dirichlet ends.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import lapack

from fracsource.errors import InvalidGridError, ShapeMismatchError
from fracsource.fracops import TimeGrid, check_order, l1_derivative, l1_weights
from fracsource.spectral import EigenBasis, YDomain, dirichlet_eigenpairs, project, trapezoid_weights


@dataclass(frozen=True)
class XGrid:
    """Uniform grid on ``G = (0, 1)`` including both Dirichlet endpoints."""

    M: int

    def __post_init__(self):
        if self.M < 4:
            raise InvalidGridError(f"need at least 4 x-nodes, got M={self.M}")

    @property
    def dx(self) -> float:
        return 1.0 / (self.M - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.M)

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.nodes)

    @property
    def length(self) -> float:
        return 1.0


def second_difference(values: np.ndarray, dx: float, axis: int = -1) -> np.ndarray:
    """Central second difference, one-sided second order at both ends."""
    v = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    if v.shape[-1] < 4:
        raise InvalidGridError("one-sided second differences need 4 nodes")
    out = np.empty_like(v)
    out[..., 1:-1] = v[..., 2:] - 2.0 * v[..., 1:-1] + v[..., :-2]
    out[..., 0] = 2.0 * v[..., 0] - 5.0 * v[..., 1] + 4.0 * v[..., 2] - v[..., 3]
    out[..., -1] = 2.0 * v[..., -1] - 5.0 * v[..., -2] + 4.0 * v[..., -3] - v[..., -4]
    return np.moveaxis(out / dx**2, -1, axis)


def gradient_energy_x(values: np.ndarray, dx: float) -> np.ndarray:
    """:math:`\\int_G |\\partial_x v|^2 dx` of the piecewise-linear interpolant (last axis is x)."""
    d = np.diff(values, axis=-1) / dx
    return np.sum(d**2, axis=-1) * dx


Sampler = Callable[..., np.ndarray]


@dataclass
class ProblemData:
    r"""Samplers for one instance of the problem.

    Shapes passed to the samplers: ``f(t, x, y)`` and ``g(t, x, y)`` receive
    ``t`` as ``(N, 1, 1)``, ``x`` as ``(1, M, 1)`` and ``y`` as ``(n, 1, 1, Q)``;
    ``phi(x, y)`` receives ``(M, 1)`` and ``(n, 1, Q)``; ``omega(y)`` receives
    ``(n, Q)``; ``psi(t, x)`` receives ``(N, 1)`` and ``(1, M)``. Results are
    broadcast to full shape, so constant factors may be returned as scalars.

    ``dalpha_psi`` and ``lap_x_psi`` optionally supply :math:`D_t^\alpha \psi`
    and :math:`\partial_x^2 \psi` in closed form; ``omega_grad`` returns the
    gradient of ``omega`` with shape ``(n, Q)``.
    """

    alpha: float
    T: float
    f: Sampler
    g: Sampler
    phi: Sampler
    omega: Sampler
    psi: Sampler
    domain: YDomain = field(default_factory=YDomain.interval)
    dalpha_psi: Sampler | None = None
    lap_x_psi: Sampler | None = None
    omega_grad: Sampler | None = None
    name: str = "custom"

    def sample(self, N: int, M: int, K: int) -> SampledProblem:
        return sample_problem(self, TimeGrid(self.T, N), XGrid(M), dirichlet_eigenpairs(self.domain, K))


@dataclass
class SampledProblem:
    """Problem data on a concrete ``(t, x, y)`` grid, plus its modal projections.

    Arrays: ``f, g`` are ``(N, M, Q)``, ``phi`` is ``(M, Q)``, ``omega`` is
    ``(Q,)``, ``psi`` and the optional analytic ``dalpha_psi, lap_x_psi`` are ``(N, M)``.
    """

    alpha: float
    tgrid: TimeGrid
    xgrid: XGrid
    basis: EigenBasis
    f: np.ndarray
    g: np.ndarray
    phi: np.ndarray
    omega: np.ndarray
    psi: np.ndarray
    dalpha_psi: np.ndarray | None = None
    lap_x_psi: np.ndarray | None = None
    omega_grad: np.ndarray | None = None
    name: str = "custom"

    def __post_init__(self):
        check_order(self.alpha)
        N, M, Q = self.tgrid.N, self.xgrid.M, self.basis.n_points
        expect = {
            "f": (N, M, Q),
            "g": (N, M, Q),
            "phi": (M, Q),
            "omega": (Q,),
            "psi": (N, M),
            "dalpha_psi": (N, M),
            "lap_x_psi": (N, M),
            "omega_grad": (self.basis.dim, Q),
        }
        for key, shape in expect.items():
            arr = getattr(self, key)
            if arr is None:
                continue
            arr = np.ascontiguousarray(np.broadcast_to(np.asarray(arr, dtype=float), shape))
            if not np.all(np.isfinite(arr)):
                raise ShapeMismatchError(f"{key} contains non-finite samples")
            setattr(self, key, arr)
        self.f_k = project(self.f, self.basis)
        self.g_k = project(self.g, self.basis)
        self.phi_k = project(self.phi, self.basis)
        self.omega_k = project(self.omega, self.basis)
        self.f_omega = self.basis.integrate(self.f * self.omega)
        self.g_omega = self.basis.integrate(self.g * self.omega)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.tgrid.N, self.xgrid.M, self.basis.K

    def scaled(self, factor: float) -> SampledProblem:
        """Copy with ``phi, g, psi`` (and the analytic psi derivatives) scaled by ``factor``."""

        def s(a):
            return None if a is None else factor * a

        return SampledProblem(
            self.alpha, self.tgrid, self.xgrid, self.basis, self.f, s(self.g), s(self.phi),
            self.omega, s(self.psi), s(self.dalpha_psi), s(self.lap_x_psi), self.omega_grad, self.name,
        )


def sample_problem(data: ProblemData, tgrid: TimeGrid, xgrid: XGrid, basis: EigenBasis) -> SampledProblem:
    n = basis.dim
    t = tgrid.nodes
    x = xgrid.nodes
    y = basis.points
    t3, x3, y4 = t.reshape(-1, 1, 1), x.reshape(1, -1, 1), y.reshape(n, 1, 1, -1)
    full = (t.size, x.size, y.shape[1])
    t2, x2 = t.reshape(-1, 1), x.reshape(1, -1)

    def opt(fun):
        return None if fun is None else np.broadcast_to(fun(t2, x2), (t.size, x.size))

    return SampledProblem(
        alpha=data.alpha,
        tgrid=tgrid,
        xgrid=xgrid,
        basis=basis,
        f=np.broadcast_to(data.f(t3, x3, y4), full),
        g=np.broadcast_to(data.g(t3, x3, y4), full),
        phi=np.broadcast_to(data.phi(x.reshape(-1, 1), y.reshape(n, 1, -1)), full[1:]),
        omega=np.broadcast_to(data.omega(y), full[2:]),
        psi=np.broadcast_to(data.psi(t2, x2), full[:2]),
        dalpha_psi=opt(data.dalpha_psi),
        lap_x_psi=opt(data.lap_x_psi),
        omega_grad=None if data.omega_grad is None else data.omega_grad(y),
        name=data.name,
    )


def solve_mode(lam: float, rhs: np.ndarray, phi_k: np.ndarray, tgrid: TimeGrid, xgrid: XGrid, alpha: float) -> np.ndarray:
    """Implicit L1 stepping of one mode; returns ``u_k`` with shape ``(N, M)``.

    Boundary values of ``phi_k`` and ``rhs`` are ignored; the Dirichlet ends
    are zero at every step.
    """
    check_order(alpha)
    rhs = np.asarray(rhs, dtype=float)
    phi_k = np.asarray(phi_k, dtype=float)
    steps, M = tgrid.N - 1, xgrid.M
    if rhs.shape != (steps + 1, M) or phi_k.shape != (M,):
        raise ShapeMismatchError(f"mode data shapes {rhs.shape}, {phi_k.shape} do not match the grids")
    if not lam > 0:
        raise ValueError(f"eigenvalue must be positive, got {lam}")
    b = l1_weights(steps, alpha)
    c = tgrid.dt ** (-alpha) / math.gamma(2.0 - alpha)
    inv_dx2 = 1.0 / xgrid.dx**2
    m = M - 2
    diag = np.full(m, c * b[0] + 2.0 * inv_dx2 + lam)
    off = np.full(m - 1, -inv_dx2)
    dl, d, du, du2, ipiv, info = lapack.dgttrf(off, diag, off)
    assert info == 0, "L1 step matrix is diagonally dominant and cannot be singular"

    u = np.zeros((steps + 1, M))
    u[0, 1:-1] = phi_k[1:-1]
    inc = np.zeros((steps, m))
    for n in range(1, steps + 1):
        hist = b[1:n] @ inc[n - 2 :: -1] if n > 1 else 0.0
        step_rhs = rhs[n, 1:-1] + c * (b[0] * u[n - 1, 1:-1] - hist)
        sol = lapack.dgttrs(dl, d, du, du2, ipiv, step_rhs)[0]
        u[n, 1:-1] = sol
        inc[n - 1] = sol - u[n - 1, 1:-1]
    return u


@dataclass
class SpectralField:
    """Modal coefficients ``u_k(t_i, x_j)`` stored as ``(N, M, K)``."""

    coeffs: np.ndarray
    tgrid: TimeGrid
    xgrid: XGrid
    basis: EigenBasis

    def physical(self, points=None) -> np.ndarray:
        """``u(t_i, x_j, y)`` at y-points (quadrature nodes by default)."""
        vals = self.basis.values if points is None else self.basis.evaluate(points)
        return self.coeffs @ vals

    def l2_norms(self) -> np.ndarray:
        """:math:`\\|u(t_i)\\|_{L_2(D)}` by Parseval and the x-trapezoid rule."""
        return np.sqrt(np.sum(self.coeffs**2, axis=-1) @ self.xgrid.weights)

    def copy(self) -> SpectralField:
        return SpectralField(self.coeffs.copy(), self.tgrid, self.xgrid, self.basis)


def solve_modes(rhs_k: np.ndarray, phi_k: np.ndarray, tgrid: TimeGrid, xgrid: XGrid, basis: EigenBasis,
                alpha: float, workers: int = 1, order=None) -> np.ndarray:
    """Run :func:`solve_mode` for every mode; ``rhs_k`` is ``(N, M, K)``, ``phi_k`` is ``(M, K)``."""
    K = basis.K
    out = np.empty((tgrid.N, xgrid.M, K))
    order = range(K) if order is None else order

    def one(k):
        out[:, :, k] = solve_mode(basis.eigenvalues[k], rhs_k[:, :, k], phi_k[:, k], tgrid, xgrid, alpha)

    if workers > 1 and K > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, order))
    else:
        for k in order:
            one(k)
    return out


def forward_solve(h: np.ndarray, problem: SampledProblem, workers: int = 1) -> SpectralField:
    """Solve the forward problem for a known source coefficient ``h(t_i, x_j)``."""
    h = np.asarray(h, dtype=float)
    N1, M, _ = problem.shape
    h = np.broadcast_to(h, (N1, M))
    if not np.all(np.isfinite(h)):
        raise ShapeMismatchError("h contains non-finite samples")
    rhs = problem.g_k + problem.f_k * h[:, :, None]
    coeffs = solve_modes(rhs, problem.phi_k, problem.tgrid, problem.xgrid, problem.basis, problem.alpha, workers)
    return SpectralField(coeffs, problem.tgrid, problem.xgrid, problem.basis)


def evaluate_overdetermination(u: SpectralField, omega_k: np.ndarray) -> np.ndarray:
    r"""Parseval form of :math:`\int_\Omega u\,\omega\,dy`, shape ``(N, M)``."""
    omega_k = np.asarray(omega_k, dtype=float)
    return u.coeffs[..., : omega_k.size] @ omega_k


def caputo_in_time(values: np.ndarray, tgrid: TimeGrid, alpha: float) -> np.ndarray:
    """L1 Caputo derivative along axis 0 with the head copied from the first step."""
    return l1_derivative(values, tgrid.dt, alpha, axis=0)


DATA_KEYS = ("f", "g", "phi", "omega", "psi", "dalpha_psi", "lap_x_psi", "omega_grad", "h")


def save_npz(path, problem: SampledProblem, h: np.ndarray | None = None) -> None:
    """Write sampled data plus the grid description; ``h`` is optional (forward runs)."""
    arrays = {k: getattr(problem, k) for k in DATA_KEYS[:-1] if getattr(problem, k) is not None}
    if h is not None:
        arrays["h"] = np.asarray(h, dtype=float)
    np.savez(
        path,
        alpha=problem.alpha,
        T=problem.tgrid.T,
        y_points=problem.basis.points,
        y_lengths=np.asarray(problem.basis.domain.lengths),
        y_kind=problem.basis.domain.kind,
        **arrays,
    )


def load_npz(path, K: int, alpha: float | None = None) -> tuple[SampledProblem, np.ndarray | None]:
    """Read data written by :func:`save_npz` (or by hand with the same keys).

    The y-samples must sit on the quadrature nodes of the ``K``-mode basis;
    ``y_points`` is compared against them.
    """
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: np.array(z[k]) for k in z.files}
    missing = [k for k in ("f", "g", "phi", "omega", "psi", "T", "y_lengths") if k not in arrays]
    if missing:
        raise ShapeMismatchError(f"data file lacks {', '.join(missing)}")
    kind = str(arrays.get("y_kind", "interval"))
    domain = YDomain(tuple(arrays["y_lengths"].ravel()), kind)
    basis = dirichlet_eigenpairs(domain, K)
    if "y_points" in arrays and (arrays["y_points"].shape != basis.points.shape
                                 or not np.allclose(arrays["y_points"], basis.points, rtol=0, atol=1e-12)):
        raise ShapeMismatchError(
            f"y-samples do not match the {basis.n_points}-node quadrature grid of a K={K} basis"
        )
    N, M = arrays["psi"].shape
    a = float(arrays["alpha"]) if alpha is None else alpha
    problem = SampledProblem(
        a, TimeGrid(float(arrays["T"]), N), XGrid(M), basis,
        **{k: arrays.get(k) for k in DATA_KEYS[:-1]}, name=str(path),
    )
    return problem, arrays.get("h")
