"""Numerics for the critical Neumann problem on the half-space with the weight ``exp(|x|^2/4)``.

Modules
-------
bubble
    The explicit bubble family, the weight, the cutoff and the test function.
quadrature
    Dimension-reduced half-space and boundary integrals; bubble constants.
asymptotics
    Weighted norms of the concentrating test function and their eps-expansions.
landscape
    Fibering maps, the threshold ``A``, threshold margins and Sobolev quotients.
solver
    Axisymmetric finite elements, the mountain-pass solver and identity checks.
cli
    The ``critneumann`` command.
"""

from .asymptotics import (
    DEFAULT_LADDER,
    expansion_coefficients,
    fit_expansion,
    test_function_totals,
    verify_expansions,
)
from .bubble import BubbleParams, Dimension, HalfSpacePoint, bubble_value
from .landscape import (
    FiberCurve,
    FunctionalParams,
    closed_form_t,
    fiber_max,
    sobolev_quotient,
    threshold_A,
    verify_threshold,
)
from .quadrature import EnergyBreakdown, QuadratureSpec, bubble_constants
from .solver import AxisymField, Grid, SolverConfig, mountain_pass_solve, pohozaev_report

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_LADDER",
    "AxisymField",
    "BubbleParams",
    "Dimension",
    "EnergyBreakdown",
    "FiberCurve",
    "FunctionalParams",
    "Grid",
    "HalfSpacePoint",
    "QuadratureSpec",
    "SolverConfig",
    "bubble_constants",
    "bubble_value",
    "closed_form_t",
    "expansion_coefficients",
    "fiber_max",
    "fit_expansion",
    "mountain_pass_solve",
    "pohozaev_report",
    "sobolev_quotient",
    "test_function_totals",
    "threshold_A",
    "verify_expansions",
    "verify_threshold",
]
