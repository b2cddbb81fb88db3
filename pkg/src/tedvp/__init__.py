"""Clock-operator time propagation, parallel-in-time solvers and CI-in-time spin dynamics."""
from .linalg import DimensionError, EigensolveError, HermitianOperator, HistoryState
from .clock import ClockEigenProblem, assemble_clock, apply_clock, clock_ground_trajectory
from .pint import LinearClock, cg_solve, coarse_solve, parareal_solve

__version__ = "0.1.0"

__all__ = [
    "DimensionError",
    "EigensolveError",
    "HermitianOperator",
    "HistoryState",
    "ClockEigenProblem",
    "assemble_clock",
    "apply_clock",
    "clock_ground_trajectory",
    "LinearClock",
    "cg_solve",
    "coarse_solve",
    "parareal_solve",
]
