"""Fourier series multiscale solver for constant-coefficient boundary value problems."""
from .discretize import equivalent_transform, solve, solve_2d
from .linsolve import SingularSystemError
from .problem import ProblemError, load_problem, parse_problem, validate
from .series1d import eval_1d, solve_1d
from .series2d import ResonanceError, eval_2d

__version__ = "0.1.0"

__all__ = [
    "ProblemError", "ResonanceError", "SingularSystemError", "equivalent_transform", "eval_1d", "eval_2d",
    "load_problem", "parse_problem", "solve", "solve_1d", "solve_2d", "validate",
]
