"""Generic solvers: simplex LP, branch and bound, log-barrier interior point."""
from .lp import LinearProgram, LpResult, solve_lp
from .barrier import ConstraintBlock, ConvexResult, SmoothConvexProgram, check_gradients, solve_convex

__all__ = ["LinearProgram", "LpResult", "solve_lp", "ConstraintBlock", "ConvexResult",
           "SmoothConvexProgram", "check_gradients", "solve_convex"]
