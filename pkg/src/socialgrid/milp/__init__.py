from .program import Constraint, LinearProgram, MilpSolution, Variable
from .simplex import NumericalError, simplex
from .solve import solve_lp, solve_milp

__all__ = ["Constraint", "LinearProgram", "MilpSolution", "NumericalError", "Variable", "simplex",
           "solve_lp", "solve_milp"]
