"""Inverse source problems for time-fractional diffusion on product domains."""

from __future__ import annotations

from fracsource.estimates import EstimateCheck, contraction_monitor, validate_apriori
from fracsource.forward import ProblemData, SampledProblem, SpectralField, XGrid, forward_solve
from fracsource.fracops import SampledSignal, TimeGrid, caputo_l1, mittag_leffler, rl_integral
from fracsource.inverse import SolverConfig, check_conditions, inverse_solve, reconstruct_h
from fracsource.presets import mms_generate
from fracsource.spectral import EigenBasis, YDomain, c_epsilon, dirichlet_eigenpairs

__version__ = "0.1.0"

__all__ = [
    "EigenBasis",
    "EstimateCheck",
    "ProblemData",
    "SampledProblem",
    "SampledSignal",
    "SolverConfig",
    "SpectralField",
    "TimeGrid",
    "XGrid",
    "YDomain",
    "c_epsilon",
    "caputo_l1",
    "check_conditions",
    "contraction_monitor",
    "dirichlet_eigenpairs",
    "forward_solve",
    "inverse_solve",
    "mittag_leffler",
    "mms_generate",
    "reconstruct_h",
    "rl_integral",
    "validate_apriori",
]
