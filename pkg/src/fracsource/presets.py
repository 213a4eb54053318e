"""Manufactured problems with closed-form solution pairs ``(u*, h*)``.

Every preset lives on ``Omega = (0, pi)`` and is built from separable terms
``T_m(t) X_m(x) sin(m y)`` with polynomial ``T_m`` so that Caputo
derivatives follow from the power rule exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from fracsource.errors import UsageError
from fracsource.forward import ProblemData, XGrid
from fracsource.fracops import TimeGrid, check_order
from fracsource.spectral import EigenBasis, YDomain

PRESETS = ("mode1", "two-mode", "zero")


@dataclass(frozen=True)
class Poly:
    """Polynomial in t, ``coeffs[p]`` multiplying ``t**p``."""

    coeffs: tuple[float, ...]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return sum(c * t**p for p, c in enumerate(self.coeffs))

    def caputo(self, t, alpha: float):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for p, c in enumerate(self.coeffs):
            if p == 0 or c == 0:
                continue
            if alpha == 1.0:
                out = out + c * p * t ** (p - 1)
            else:
                out = out + c * gamma_fn(p + 1) / gamma_fn(p + 1 - alpha) * t ** (p - alpha)
        return out


@dataclass(frozen=True)
class Term:
    """``amp * T(t) * sin(freq * pi * x) * sin(m * y)``."""

    m: int
    time: Poly
    freq: int
    amp: float = 1.0

    def x(self, x):
        return self.amp * np.sin(self.freq * math.pi * np.asarray(x))

    def xx(self, x):
        return -((self.freq * math.pi) ** 2) * self.x(x)


@dataclass
class Manufactured:
    """Problem data together with the exact pair it was built from."""

    data: ProblemData
    terms: tuple[Term, ...]
    h_exact_fn: object

    def u_exact(self, t, x, y):
        t, x, y = np.asarray(t), np.asarray(x), np.asarray(y)
        return sum(term.time(t) * term.x(x) * np.sin(term.m * y) for term in self.terms) if self.terms else 0.0 * (t + x + y)

    def h_exact(self, tgrid: TimeGrid, xgrid: XGrid) -> np.ndarray:
        t, x = tgrid.nodes.reshape(-1, 1), xgrid.nodes.reshape(1, -1)
        return np.broadcast_to(self.h_exact_fn(t, x), (t.size, x.size)).astype(float)

    def exact_coeffs(self, tgrid: TimeGrid, xgrid: XGrid, basis: EigenBasis) -> np.ndarray:
        """Exact modal coefficients ``(N, M, K)``; ``sin(m y) = sqrt(pi/2) v_m``."""
        out = np.zeros((tgrid.N, xgrid.M, basis.K))
        t, x = tgrid.nodes.reshape(-1, 1), xgrid.nodes.reshape(1, -1)
        index = {int(i): k for k, i in enumerate(basis.multi_indices[:, 0])}
        for term in self.terms:
            if term.m in index:
                out[:, :, index[term.m]] += math.sqrt(math.pi / 2) * term.time(t) * term.x(x)
        return out


def _series(weights: dict[int, float]):
    def value(y):
        y = np.asarray(y)
        return sum(w * np.sin(m * y[0]) for m, w in weights.items())

    def grad(y):
        y = np.asarray(y)
        return sum(w * m * np.cos(m * y) for m, w in weights.items())

    return value, grad


def _build(alpha: float, T: float, terms: tuple[Term, ...], f_w: dict[int, float], om_w: dict[int, float],
           h_time: Poly, h_freq: int, name: str) -> Manufactured:
    f_y, _ = _series(f_w)
    omega, omega_grad = _series(om_w)
    half_pi = math.pi / 2

    def h_fn(t, x):
        return h_time(t) * np.sin(h_freq * math.pi * x)

    def f(t, x, y):
        return f_y(y) + 0.0 * (t + x)

    def g(t, x, y):
        total = -f_y(y) * h_fn(t, x)
        for term in terms:
            lhs = term.time.caputo(t, alpha) * term.x(x) - term.time(t) * term.xx(x) + term.m**2 * term.time(t) * term.x(x)
            total = total + lhs * np.sin(term.m * y[0])
        return total

    def phi(x, y):
        return sum(term.time(0.0) * term.x(x) * np.sin(term.m * y[0]) for term in terms) + 0.0 * (x + y[0])

    def psi(t, x):
        return sum(om_w.get(term.m, 0.0) * half_pi * term.time(t) * term.x(x) for term in terms) + 0.0 * (t + x)

    def dalpha_psi(t, x):
        return sum(om_w.get(term.m, 0.0) * half_pi * term.time.caputo(t, alpha) * term.x(x) for term in terms) + 0.0 * (t + x)

    def lap_x_psi(t, x):
        return sum(om_w.get(term.m, 0.0) * half_pi * term.time(t) * term.xx(x) for term in terms) + 0.0 * (t + x)

    data = ProblemData(
        alpha=alpha, T=T, f=f, g=g, phi=phi, omega=omega, psi=psi, domain=YDomain.interval(math.pi),
        dalpha_psi=dalpha_psi, lap_x_psi=lap_x_psi, omega_grad=omega_grad, name=name,
    )
    return Manufactured(data, terms, h_fn)


def mms_generate(preset: str, alpha: float, T: float = 1.0) -> Manufactured:
    """Build a manufactured instance by name (see :data:`PRESETS`)."""
    alpha = check_order(alpha)
    if not (T > 0 and math.isfinite(T)):
        raise UsageError(f"final time must be positive, got {T}")
    if preset == "mode1":
        terms = (Term(1, Poly((1.0, 0.0, 1.0)), 1),)
        return _build(alpha, T, terms, {1: 1.0}, {1: 1.0}, Poly((1.0,)), 1, preset)
    if preset == "two-mode":
        terms = (Term(1, Poly((1.0, 0.0, 1.0)), 1), Term(3, Poly((0.0, 0.0, 1.0)), 2, 0.5))
        return _build(alpha, T, terms, {1: 1.0, 3: 0.25}, {1: 1.0, 3: 0.5}, Poly((1.0, 1.0)), 1, preset)
    if preset == "zero":
        return _build(alpha, T, (), {1: 1.0}, {1: 1.0}, Poly((0.0,)), 1, preset)
    raise UsageError(f"unknown preset {preset!r}; choose one of {', '.join(PRESETS)}")
