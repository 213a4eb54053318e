"""Exception hierarchy shared by the solver modules and the CLI."""

from __future__ import annotations


class FracSourceError(Exception):
    """Base class for every error raised by this package."""


class FractionalDomainError(FracSourceError, ValueError):
    """A parameter lies outside the range where an operator is defined."""


class InvalidGridError(FracSourceError, ValueError):
    """A grid is not uniform, too short, or otherwise malformed."""


class UnsupportedRangeError(FracSourceError, ValueError):
    """Mittag-Leffler parameters fall outside the supported evaluation window."""


class UnsupportedDomainError(FracSourceError, ValueError):
    """The y-domain has no closed-form Dirichlet eigenpairs."""


class ShapeMismatchError(FracSourceError, ValueError):
    """Sampled data does not live on the expected nodes."""


class SeriesDivergenceError(FracSourceError, ValueError):
    r"""The eigenvalue series :math:`\sum \lambda_k^{-n/2-\varepsilon}` diverges."""


class DenominatorDegeneracyError(FracSourceError):
    r"""The pairing :math:`(f(t,x,\cdot), \omega)` is (numerically) zero somewhere.

    ``where`` holds the offending ``(t, x)`` coordinates.
    """

    def __init__(self, message: str, where: list[tuple[float, float]] | None = None):
        super().__init__(message)
        self.where = where or []


class ConditionViolationError(FracSourceError):
    """A hard solvability requirement failed; ``report`` carries the details."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class IterationDivergenceError(FracSourceError):
    """Successive approximations stopped contracting."""

    def __init__(self, message: str, history: list[float] | None = None):
        super().__init__(message)
        self.history = history or []


class NoConvergenceError(FracSourceError):
    """The iteration budget was exhausted before the stopping rule fired."""

    def __init__(self, message: str, last_w: float = float("nan"), history=None):
        super().__init__(message)
        self.last_w = last_w
        self.history = history or []


class InsufficientHistoryError(FracSourceError, ValueError):
    """Too few iterates to fit a contraction rate."""


class UsageError(FracSourceError):
    """Bad command-line or configuration input."""
