"""Discrete relative eigenvalues of homogeneous nonlinear operator pairs on an interval."""

from .grid import Field, Grid1D
from .minimize import MinimizationResult, MinimizeOptions, minimize
from .operators import OperatorSpec
from .quotient import DegenerateQuotientError, QuotientSpec

__all__ = [
    "Field",
    "Grid1D",
    "MinimizationResult",
    "MinimizeOptions",
    "minimize",
    "OperatorSpec",
    "QuotientSpec",
    "DegenerateQuotientError",
]

__version__ = "0.1.0"
