"""Mixed-binary linear programming: model container, simplex LP, branch-and-bound."""

from .bnb import MAX_BRUTE_FORCE_BINARIES, TooManyBinariesError, brute_force_milp, solve_milp
from .lp import DEFAULT_KERNEL, KERNELS, SolverError, check_feasible, solve_lp, solve_with_bounds
from .model import EQ, GE, LE, MilpModel, MilpSolution, ModelBuilder, ModelError, Status

__all__ = [
    "DEFAULT_KERNEL",
    "EQ",
    "GE",
    "KERNELS",
    "LE",
    "MAX_BRUTE_FORCE_BINARIES",
    "MilpModel",
    "MilpSolution",
    "ModelBuilder",
    "ModelError",
    "SolverError",
    "Status",
    "TooManyBinariesError",
    "brute_force_milp",
    "check_feasible",
    "solve_lp",
    "solve_milp",
    "solve_with_bounds",
]
