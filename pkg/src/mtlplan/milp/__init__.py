"""MILP modelling, a dual simplex LP core, branch and bound, and MPS I/O."""

from .model import EQ, GE, LE, LpSolution, MilpModel, MilpSolution, Violation
from .simplex import DualSimplex, NumericalError, solve_lp
from .bnb import branch_and_bound, DisjunctionsFirst, most_fractional
from .mps import MpsError, export_mps, export_solution, import_solution, read_mps

__all__ = [
    "EQ", "GE", "LE", "LpSolution", "MilpModel", "MilpSolution", "Violation",
    "DualSimplex", "NumericalError", "solve_lp",
    "branch_and_bound", "DisjunctionsFirst", "most_fractional",
    "MpsError", "export_mps", "export_solution", "import_solution", "read_mps",
]
