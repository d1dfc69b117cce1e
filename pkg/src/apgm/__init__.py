"""Accelerated dual proximal gradient QP solver with order-alpha momentum tables."""

from .dual_pgm import QpProblem, SolveResult, SolverOptions, solve
from .mpc_condense import MpcSpec, condense
from .param_table import LookupTable, build_table

__all__ = [
    "LookupTable",
    "MpcSpec",
    "QpProblem",
    "SolveResult",
    "SolverOptions",
    "build_table",
    "condense",
    "solve",
]

__version__ = "0.1.0"
