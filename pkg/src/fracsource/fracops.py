r"""Discrete fractional calculus on uniform time grids.

The Caputo derivative is discretized with the L1 scheme,

.. math::

    D_t^\alpha v(t_n) \approx \frac{\Delta t^{-\alpha}}{\Gamma(2-\alpha)}
        \sum_{j=0}^{n-1} b_j \,(v_{n-j} - v_{n-j-1}),
    \qquad b_j = (j+1)^{1-\alpha} - j^{1-\alpha},

and the Riemann-Liouville integral :math:`J^\alpha` by product integration of
the piecewise-linear interpolant, which is exact for affine signals.
All array routines act along ``axis`` so that a whole ``(t, x, k)`` field can
be differentiated in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from fracsource.errors import (
    FractionalDomainError,
    InvalidGridError,
    UnsupportedRangeError,
)

# beyond this many nodes the dense Toeplitz matrix is replaced by 1D convolutions
_DENSE_LIMIT = 2049


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i * dt`` on ``[0, T]`` with ``N`` nodes."""

    T: float
    N: int

    def __post_init__(self):
        if not (self.N >= 2):
            raise InvalidGridError(f"time grid needs at least 2 nodes, got {self.N}")
        if not (np.isfinite(self.T) and self.T > 0):
            raise InvalidGridError(f"final time must be positive, got {self.T}")

    @property
    def dt(self) -> float:
        return self.T / (self.N - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N)

    @classmethod
    def from_nodes(cls, nodes, rtol: float = 1e-10) -> TimeGrid:
        """Build a grid from explicit nodes, rejecting non-uniform spacing."""
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise InvalidGridError("nodes must be a 1D array with at least 2 entries")
        if nodes[0] != 0.0:
            raise InvalidGridError(f"first node must be 0, got {nodes[0]}")
        steps = np.diff(nodes)
        h = (nodes[-1] - nodes[0]) / (nodes.size - 1)
        if h <= 0 or np.max(np.abs(steps - h)) > rtol * h:
            raise InvalidGridError("time nodes are not uniformly spaced")
        return cls(T=float(nodes[-1]), N=int(nodes.size))


@dataclass(frozen=True)
class SampledSignal:
    """Values of a signal on a :class:`TimeGrid` (time is axis 0).

    ``extrapolated_head`` marks outputs whose value at ``t_0`` was copied from
    ``t_1`` because the operator is undefined there.
    """

    grid: TimeGrid
    values: np.ndarray
    extrapolated_head: bool = field(default=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim == 0 or values.shape[0] != self.grid.N:
            raise InvalidGridError(
                f"signal has {values.shape[:1]} time samples, grid has {self.grid.N}"
            )
        if not np.all(np.isfinite(values)):
            raise FractionalDomainError("sampled signal contains non-finite values")

    @classmethod
    def from_function(cls, fun, grid: TimeGrid) -> SampledSignal:
        return cls(grid, np.asarray(fun(grid.nodes), dtype=float) * np.ones(grid.N))


def check_order(alpha: float, allow_one: bool = True) -> float:
    """Validate a fractional order, returning it as a float."""
    alpha = float(alpha)
    upper_ok = alpha <= 1.0 if allow_one else alpha < 1.0
    if not (alpha > 0.0 and upper_ok):
        raise FractionalDomainError(f"fractional order must lie in (0, 1], got {alpha}")
    return alpha


def l1_weights(n: int, alpha: float) -> np.ndarray:
    """Return ``b_0 .. b_{n-1}``; positive and strictly decreasing for alpha < 1."""
    alpha = check_order(alpha)
    if alpha == 1.0:
        w = np.zeros(n)
        w[0] = 1.0
        return w
    j = np.arange(n, dtype=float)
    return (j + 1.0) ** (1.0 - alpha) - j ** (1.0 - alpha)


def _causal_toeplitz_apply(kernel: np.ndarray, data: np.ndarray) -> np.ndarray:
    """Compute ``out[n] = sum_{m<=n} kernel[n-m] * data[m]`` along axis 0."""
    n = data.shape[0]
    flat = data.reshape(n, -1)
    if n <= _DENSE_LIMIT:
        idx = np.arange(n)
        diff = idx[:, None] - idx[None, :]
        mat = np.where(diff >= 0, kernel[np.clip(diff, 0, None)], 0.0)
        out = mat @ flat
    else:
        out = np.empty_like(flat)
        for col in range(flat.shape[1]):
            out[:, col] = np.convolve(kernel, flat[:, col])[:n]
    return out.reshape(data.shape)


def l1_derivative(values, dt: float, alpha: float, axis: int = 0) -> np.ndarray:
    """L1 Caputo derivative of sampled values along ``axis``.

    The value at the first node is copied from the second node.
    At ``alpha == 1`` this is the backward difference quotient.
    """
    alpha = check_order(alpha)
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = v.shape[0]
    if n < 2:
        raise InvalidGridError("need at least 2 time samples")
    increments = np.diff(v, axis=0)
    if alpha == 1.0:
        tail = increments / dt
    else:
        scale = dt ** (-alpha) / math.gamma(2.0 - alpha)
        tail = scale * _causal_toeplitz_apply(l1_weights(n - 1, alpha), increments)
    out = np.concatenate([tail[:1], tail], axis=0)
    return np.moveaxis(out, 0, axis)


def caputo_l1(v: SampledSignal, alpha: float) -> SampledSignal:
    """Caputo derivative of ``v`` by the L1 scheme (head value extrapolated)."""
    return SampledSignal(v.grid, l1_derivative(v.values, v.grid.dt, alpha), True)


def _rl_kernel(n: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    m = np.arange(n, dtype=float)
    p = alpha + 1.0
    kernel = (m + 1.0) ** p - 2.0 * m**p + np.abs(m - 1.0) ** p
    kernel[0] = 1.0
    steps = np.arange(1, n + 1, dtype=float)
    head = (steps - 1.0) ** p - (steps - alpha - 1.0) * steps**alpha
    return kernel, head


def rl_quadrature(values, dt: float, alpha: float, axis: int = 0) -> np.ndarray:
    r"""Riemann-Liouville integral :math:`J^\alpha` of sampled values along ``axis``."""
    alpha = float(alpha)
    if not alpha > 0.0:
        raise FractionalDomainError(f"integration order must be positive, got {alpha}")
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = v.shape[0]
    kernel, head = _rl_kernel(n - 1, alpha)
    body = _causal_toeplitz_apply(kernel, v[1:])
    body += head.reshape((-1,) + (1,) * (v.ndim - 1)) * v[:1]
    body *= dt**alpha / math.gamma(alpha + 2.0)
    out = np.concatenate([np.zeros_like(v[:1]), body], axis=0)
    return np.moveaxis(out, 0, axis)


def rl_integral(v: SampledSignal, alpha: float) -> SampledSignal:
    return SampledSignal(v.grid, rl_quadrature(v.values, v.grid.dt, alpha))


# --------------------------------------------------------------------------
# Mittag-Leffler function


def _ml_series(a: float, b: float, z: float) -> tuple[float, float]:
    """Power series; returns (value, sum of absolute terms)."""
    if z == 0.0:
        r = float(special.rgamma(b))
        return r, abs(r)
    logz = math.log(abs(z))
    chunks = []
    start = 0
    while True:
        k = np.arange(start, start + 256, dtype=float)
        logt = k * logz - special.gammaln(a * k + b)
        if logt.max() > 700.0:
            if z < 0:
                return 0.0, math.inf
            raise UnsupportedRangeError(f"E_{{{a},{b}}}({z}) overflows double precision")
        chunks.append(logt)
        # stop once terms decay and the last one is negligible
        if logt[-1] < logt[-2] and logt[-1] < max(c.max() for c in chunks) - 46.0:
            break
        start += 256
        if start > 40000:
            raise UnsupportedRangeError(f"series for E_{{{a},{b}}}({z}) did not converge")
    logt = np.concatenate(chunks)
    mags = np.exp(logt)
    if z < 0:
        signed = np.where(np.arange(logt.size) % 2 == 1, -mags, mags)
    else:
        signed = mags
    return math.fsum(signed), float(mags.sum())


def _ml_negative_integral(a: float, b: float, z: float) -> float:
    # integral representation for 0 < a < 1, b < 1 + a, z < 0
    s1 = math.sin(math.pi * (1.0 - b))
    s2 = math.sin(math.pi * (1.0 - b + a))
    c = math.cos(math.pi * a)
    pw = (1.0 - b) / a

    def kernel(r):
        return (
            r**pw
            * math.exp(-(r ** (1.0 / a)))
            * (r * s1 - z * s2)
            / (r * r - 2.0 * r * z * c + z * z)
        )

    r_max = 745.0**a
    az = abs(z)
    breaks = sorted({p for p in (az * abs(c), az, 2.0 * az) if 0.0 < p < r_max})
    edges = [0.0, *breaks, r_max]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(kernel, lo, hi, epsabs=0.0, epsrel=1e-13, limit=400)
        total += val
    return total / (a * math.pi)


def _ml_scalar(a: float, b: float, z: float) -> float:
    value, magnitude = _ml_series(a, b, z) if z >= -60.0 else (0.0, math.inf)
    if z >= 0.0 or magnitude * 1e-16 <= 1e-12 * abs(value):
        return value
    if a == 1.0:
        if b == 1.0:
            return math.exp(z)
        return float(special.hyp1f1(1.0, b, z) * special.rgamma(b))
    if a > 1.0:
        raise UnsupportedRangeError(
            f"E_{{{a},{b}}}({z}): negative arguments need order <= 1"
        )
    # lower mu below 1 + alpha with E_{a,b-a}(z) = z E_{a,b}(z) + 1/Gamma(b-a)
    shifts = 0
    while b - shifts * a >= 1.0 + a:
        shifts += 1
    value = _ml_negative_integral(a, b - shifts * a, z)
    for m in range(shifts - 1, -1, -1):
        value = (value - special.rgamma(b - (m + 1) * a)) / z
    return float(value)


def mittag_leffler(alpha: float, mu: float, z):
    r"""Two-parameter Mittag-Leffler function :math:`E_{\alpha,\mu}(z)` for real ``z``.

    Nonnegative arguments, and negative ones where cancellation is harmless,
    use the power series (summed with ``math.fsum``). Otherwise, for
    ``0 < alpha < 1``, the integral representation of Gorenflo, Loutchko and
    Luchko is integrated by adaptive quadrature after reducing ``mu`` below
    ``1 + alpha`` with the three-term recursion; ``alpha == 1`` goes through
    the confluent hypergeometric function. Negative arguments with
    ``alpha > 1`` are not supported.
    """
    a = float(alpha)
    b = float(mu)
    if not (a > 0.0 and b > 0.0):
        raise FractionalDomainError(f"need alpha > 0 and mu > 0, got ({a}, {b})")
    zarr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(zarr)):
        raise UnsupportedRangeError("Mittag-Leffler argument must be finite")
    if zarr.ndim == 0:
        return _ml_scalar(a, b, float(zarr))
    flat = [_ml_scalar(a, b, float(x)) for x in zarr.ravel()]
    return np.array(flat).reshape(zarr.shape)


# --------------------------------------------------------------------------
# Grönwall bound and its L1 counterpart


def gronwall_bound(y0: float, c1: float, c2: SampledSignal, alpha: float) -> SampledSignal:
    r"""Right-hand side of the fractional Grönwall inequality on ``c2``'s grid.

    If :math:`D^\alpha y \le c_1 y + c_2` with :math:`y \ge 0`, then

    .. math::

        y(t) \le y(0) E_\alpha(c_1 t^\alpha)
            + \Gamma(\alpha) E_{\alpha,\alpha}(c_1 t^\alpha) J^\alpha c_2(t).
    """
    alpha = check_order(alpha)
    if y0 < 0 or c1 < 0:
        raise FractionalDomainError("gronwall_bound needs y0 >= 0 and c1 >= 0")
    if np.any(c2.values < 0):
        raise FractionalDomainError("gronwall_bound needs a nonnegative forcing")
    arg = c1 * c2.grid.nodes**alpha
    forcing = rl_quadrature(c2.values, c2.grid.dt, alpha)
    bound = y0 * mittag_leffler(alpha, 1.0, arg) + math.gamma(alpha) * mittag_leffler(
        alpha, alpha, arg
    ) * forcing
    return SampledSignal(c2.grid, bound)


def solve_linear_caputo_ode(y0: float, rate: float, forcing: SampledSignal, alpha: float):
    """Implicit L1 solution of ``D^alpha y = rate * y + forcing``, ``y(0) = y0``."""
    alpha = check_order(alpha)
    grid = forcing.grid
    n = grid.N
    b = l1_weights(n - 1, alpha)
    scale = 1.0 / grid.dt if alpha == 1.0 else grid.dt ** (-alpha) / math.gamma(2.0 - alpha)
    diag = scale * b[0] - rate
    if diag <= 0:
        raise FractionalDomainError("time step too large for this growth rate")
    y = np.empty(n)
    y[0] = y0
    inc = np.zeros(n - 1)
    for step in range(1, n):
        # history: sum_{j>=1} b_j (y_{step-j} - y_{step-j-1})
        hist = np.dot(b[1:step], inc[step - 2 :: -1][: step - 1]) if step > 1 else 0.0
        y[step] = (scale * b[0] * y[step - 1] - scale * hist + forcing.values[step]) / diag
        inc[step - 1] = y[step] - y[step - 1]
    return SampledSignal(grid, y)
