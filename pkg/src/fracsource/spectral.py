r"""Dirichlet-Laplacian eigenbases on intervals and boxes.

Eigenpairs are closed form. On :math:`(0, L_1) \times \dots \times (0, L_n)`

.. math::

    \lambda_{\mathbf m} = \sum_i (m_i \pi / L_i)^2, \qquad
    v_{\mathbf m}(y) = \prod_i \sqrt{2 / L_i}\, \sin(m_i \pi y_i / L_i),

sorted by eigenvalue with lexicographic tie-breaking on the multi-index.
Inner products over the y-domain use composite Simpson quadrature on a
tensor grid fine enough to resolve the highest retained mode.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from fracsource.errors import (
    SeriesDivergenceError,
    ShapeMismatchError,
    UnsupportedDomainError,
)

SUPPORTED_KINDS = ("interval", "box")


def simpson_weights(nodes: np.ndarray) -> np.ndarray:
    """Composite Simpson weights on an odd number of uniform nodes."""
    q = nodes.size
    if q < 3 or q % 2 == 0:
        raise ShapeMismatchError(f"Simpson's rule needs an odd node count >= 3, got {q}")
    h = (nodes[-1] - nodes[0]) / (q - 1)
    w = np.full(q, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * h / 3.0


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    h = (nodes[-1] - nodes[0]) / (nodes.size - 1)
    w = np.full(nodes.size, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True)
class YDomain:
    """Interval ``(0, L)`` or box ``(0, L_1) x ... x (0, L_n)``.

    ``nodes_per_axis`` is a lower bound for the quadrature resolution; the
    basis raises it when needed to resolve its highest mode.
    """

    lengths: tuple[float, ...] = (math.pi,)
    kind: str = "interval"
    nodes_per_axis: int = 0

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        object.__setattr__(self, "lengths", lengths)
        if len(lengths) < 1:
            raise UnsupportedDomainError("domain needs at least one axis")
        if any(not (L > 0 and math.isfinite(L)) for L in lengths):
            raise UnsupportedDomainError(f"edge lengths must be positive, got {lengths}")
        if self.kind == "interval" and len(lengths) != 1:
            raise UnsupportedDomainError("an interval has exactly one length")

    @classmethod
    def interval(cls, length: float = math.pi, nodes: int = 0) -> YDomain:
        return cls((length,), "interval", nodes)

    @classmethod
    def box(cls, *lengths: float, nodes: int = 0) -> YDomain:
        return cls(tuple(lengths), "box", nodes)

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def measure(self) -> float:
        return float(np.prod(self.lengths))


def weyl_constant(domain: YDomain) -> float:
    r"""Leading Weyl coefficient :math:`C_n |\Omega|^{-2/n}` in :math:`\lambda_k \sim c k^{2/n}`."""
    n = domain.dim
    ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    return 4.0 * math.pi**2 * ball ** (-2.0 / n) * domain.measure ** (-2.0 / n)


def _sorted_multi_indices(lengths: tuple[float, ...], K: int) -> tuple[np.ndarray, np.ndarray]:
    n = len(lengths)
    if n == 1:
        idx = np.arange(1, K + 1).reshape(-1, 1)
    else:
        # the K smallest eigenvalues never need an axis index above K
        grid = itertools.product(range(1, K + 1), repeat=n)
        idx = np.array(list(grid))
    lam = np.sum((idx * np.pi / np.asarray(lengths)) ** 2, axis=1)
    order = np.lexsort(tuple(idx[:, i] for i in reversed(range(n))) + (lam,))
    idx = idx[order][:K]
    return idx, lam[order][:K]


class EigenBasis:
    """First ``K`` Dirichlet eigenpairs of a :class:`YDomain`.

    Quadrature nodes and sampled eigenfunctions are built lazily, so a basis
    used only for its eigenvalues stays cheap for large ``K``.
    """

    def __init__(self, domain: YDomain, K: int):
        if domain.kind not in SUPPORTED_KINDS:
            raise UnsupportedDomainError(
                f"no closed-form eigenpairs for domain kind {domain.kind!r}"
            )
        if K < 1:
            raise ValueError(f"need at least one mode, got K={K}")
        self.domain = domain
        self.K = int(K)
        idx, lam = _sorted_multi_indices(domain.lengths, self.K)
        self.multi_indices = idx
        self.eigenvalues = lam
        self.multi_indices.setflags(write=False)
        self.eigenvalues.setflags(write=False)

    def __repr__(self):
        return f"EigenBasis({self.domain!r}, K={self.K})"

    @property
    def dim(self) -> int:
        return self.domain.dim

    @cached_property
    def axis_nodes(self) -> list[np.ndarray]:
        top = int(self.multi_indices.max())
        q = max(self.domain.nodes_per_axis, 8 * top + 1)
        if q % 2 == 0:
            q += 1
        return [np.linspace(0.0, L, q) for L in self.domain.lengths]

    @cached_property
    def points(self) -> np.ndarray:
        """Quadrature points, shape ``(n, Q)``."""
        mesh = np.meshgrid(*self.axis_nodes, indexing="ij")
        return np.stack([m.ravel() for m in mesh])

    @cached_property
    def weights(self) -> np.ndarray:
        w = simpson_weights(self.axis_nodes[0])
        for ax in self.axis_nodes[1:]:
            w = np.multiply.outer(w, simpson_weights(ax))
        return np.ascontiguousarray(w.ravel())

    @cached_property
    def values(self) -> np.ndarray:
        """Eigenfunctions at the quadrature points, shape ``(K, Q)``."""
        return self.evaluate(self.points)

    @cached_property
    def _weighted_values(self) -> np.ndarray:
        return self.values * self.weights

    @property
    def n_points(self) -> int:
        return self.weights.size

    def _as_points(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.dim == 1 and pts.ndim == 1:
            pts = pts.reshape(1, -1)
        if pts.ndim != 2 or pts.shape[0] != self.dim:
            raise ShapeMismatchError(f"points must have shape ({self.dim}, P), got {pts.shape}")
        return pts

    def evaluate(self, points) -> np.ndarray:
        """Eigenfunctions at arbitrary points ``(n, P)``; returns ``(K, P)``."""
        pts = self._as_points(points)
        out = np.ones((self.K, pts.shape[1]))
        for axis, L in enumerate(self.domain.lengths):
            freq = self.multi_indices[:, axis : axis + 1] * np.pi / L
            out *= math.sqrt(2.0 / L) * np.sin(freq * pts[axis])
        return out

    def gradient(self, points) -> np.ndarray:
        """Analytic gradients, shape ``(K, n, P)``."""
        pts = self._as_points(points)
        sines, cosines = [], []
        for axis, L in enumerate(self.domain.lengths):
            freq = self.multi_indices[:, axis : axis + 1] * np.pi / L
            sines.append(math.sqrt(2.0 / L) * np.sin(freq * pts[axis]))
            cosines.append(math.sqrt(2.0 / L) * freq * np.cos(freq * pts[axis]))
        grads = []
        for axis in range(self.dim):
            g = cosines[axis].copy()
            for other in range(self.dim):
                if other != axis:
                    g *= sines[other]
            grads.append(g)
        return np.stack(grads, axis=1)

    def integrate(self, samples) -> np.ndarray:
        """Quadrature over the y-domain along the last axis."""
        samples = np.asarray(samples, dtype=float)
        if samples.shape[-1] != self.n_points:
            raise ShapeMismatchError(
                f"expected {self.n_points} y-samples on the last axis, got {samples.shape[-1]}"
            )
        return samples @ self.weights


def dirichlet_eigenpairs(domain: YDomain, K: int) -> EigenBasis:
    return EigenBasis(domain, K)


def project(samples, basis: EigenBasis, return_defect: bool = False):
    """Fourier coefficients ``p_k = (p, v_k)`` of samples on the quadrature points.

    With ``return_defect`` the Parseval defect ``||p||^2 - sum p_k^2`` is
    returned as well (same leading shape as the coefficients minus the last axis).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape[-1] != basis.n_points:
        raise ShapeMismatchError(
            f"samples carry {samples.shape[-1]} y-values, basis has {basis.n_points} nodes"
        )
    coeffs = samples @ basis._weighted_values.T
    if not return_defect:
        return coeffs
    defect = basis.integrate(samples**2) - np.sum(coeffs**2, axis=-1)
    return coeffs, defect


def reconstruct(coeffs, basis: EigenBasis, points=None) -> np.ndarray:
    """Partial sum ``sum_k p_k v_k`` at ``points`` (quadrature points by default)."""
    coeffs = np.asarray(coeffs, dtype=float)
    k = coeffs.shape[-1]
    if k > basis.K:
        raise ShapeMismatchError(f"{k} coefficients exceed the basis size {basis.K}")
    vals = basis.values if points is None else basis.evaluate(points)
    return coeffs @ vals[:k]


class CEpsilon(NamedTuple):
    partial: float
    tail: float

    @property
    def upper(self) -> float:
        return self.partial + self.tail


def c_epsilon(basis: EigenBasis, eps: float) -> CEpsilon:
    r"""Partial sum of :math:`\sum_k \lambda_k^{-n/2-\varepsilon}` plus a bound on the rest.

    Intervals use the exact eigenvalues in an integral comparison. Boxes use
    the Li-Yau lower bound :math:`\lambda_k \ge \frac{n}{n+2} C_n (k/|\Omega|)^{2/n}`.
    """
    if not eps > 0:
        raise SeriesDivergenceError(
            f"C_eps diverges for eps={eps}: the series needs exponent > n/2"
        )
    n = basis.dim
    a = n / 2 + eps
    K = basis.K
    partial = math.fsum(basis.eigenvalues ** (-a))
    if n == 1:
        scale = (math.pi / basis.domain.lengths[0]) ** (-2 * a)
        tail = scale * K ** (1 - 2 * a) / (2 * a - 1)
    else:
        c = n / (n + 2) * weyl_constant(basis.domain)
        p = 2 * a / n
        tail = c ** (-a) * K ** (1 - p) / (p - 1)
    return CEpsilon(partial, tail)


def two_tau(dim: int, eps: float) -> float:
    return dim / 2 + 1 + eps


def tau_norm(coeffs, basis: EigenBasis, eps: float, x_weights=None) -> np.ndarray:
    r"""Squared :math:`\tau`-norm :math:`\sum_k \lambda_k^{2\tau} |p_k|^2`, with :math:`2\tau = n/2 + 1 + \varepsilon`.

    ``coeffs`` has modes on the last axis. If ``x_weights`` is given, the
    result is also integrated over the second-to-last (x) axis.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    k = coeffs.shape[-1]
    weights = basis.eigenvalues[:k] ** two_tau(basis.dim, eps)
    per_point = coeffs**2 @ weights
    if x_weights is None:
        return per_point
    return per_point @ np.asarray(x_weights, dtype=float)


def tau_tail_fraction(coeffs, basis: EigenBasis, eps: float) -> float:
    """Share of the tau-norm carried by the upper half of the modes.

    Small values indicate the sampled function sits comfortably in the
    fractional-power domain at this truncation.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    w = basis.eigenvalues ** two_tau(basis.dim, eps) * coeffs.reshape(-1, basis.K) ** 2
    total = w.sum()
    if total == 0:
        return 0.0
    return float(w[:, basis.K // 2 :].sum() / total)


@dataclass(frozen=True)
class GradientPairing:
    gamma: np.ndarray
    omega_coeffs: np.ndarray
    grad_norm_sq: float
    boundary_residual: float
    boundary_ok: bool


def fourth_order_derivative(values: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Fourth-order finite differences on a uniform grid (one-sided near the ends)."""
    f = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    if f.shape[0] < 5:
        raise ShapeMismatchError("fourth-order differences need at least 5 nodes")
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / 12.0
    d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / 12.0
    d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / 12.0
    d[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) / 12.0
    d[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]) / 12.0
    return np.moveaxis(d / h, 0, axis)


def _boundary_mask(basis: EigenBasis) -> np.ndarray:
    mask = np.zeros(basis.n_points, dtype=bool)
    for axis, nodes in enumerate(basis.axis_nodes):
        coord = basis.points[axis]
        mask |= (coord == nodes[0]) | (coord == nodes[-1])
    return mask


def gradient_pairing(basis: EigenBasis, omega, omega_grad=None, tol: float = 1e-8):
    r"""Pairings :math:`\gamma_k = (\nabla v_k, \nabla\omega) = \lambda_k (v_k, \omega)`.

    ``omega`` holds samples at the quadrature points. ``omega_grad`` (shape
    ``(n, Q)``) supplies an analytic gradient; otherwise second-order finite
    differences (fourth order) on the tensor grid are used for :math:`\|\nabla\omega\|^2`.
    A nonzero trace of :math:`\omega` only raises ``boundary_ok = False``.
    """
    omega = np.asarray(omega, dtype=float)
    coeffs = project(omega, basis)
    gamma = basis.eigenvalues * coeffs
    if omega_grad is None:
        shape = tuple(ax.size for ax in basis.axis_nodes)
        grid = omega.reshape(shape)
        steps = [ax[1] - ax[0] for ax in basis.axis_nodes]
        omega_grad = np.stack([fourth_order_derivative(grid, h, axis).ravel() for axis, h in enumerate(steps)])
    grad_sq = float(basis.integrate(np.sum(np.asarray(omega_grad) ** 2, axis=0)))
    scale = max(float(np.max(np.abs(omega))), 1e-300)
    trace = float(np.max(np.abs(omega[_boundary_mask(basis)]))) / scale
    return GradientPairing(gamma, coeffs, grad_sq, trace, trace <= tol)
