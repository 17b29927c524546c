"""Heuristic solver and relaxation bounds for separable-affine problems."""

from .admm import SolveOptions, SolveResult, point_repair, solve
from .errors import SapError
from .pwq import PiecewiseQuadratic, QuadPiece, envelope, prox
from .sap import SapProblem, Scaling, relax

__all__ = [
    "PiecewiseQuadratic",
    "QuadPiece",
    "SapError",
    "SapProblem",
    "Scaling",
    "SolveOptions",
    "SolveResult",
    "envelope",
    "point_repair",
    "prox",
    "relax",
    "solve",
]
__version__ = "0.1.0"
