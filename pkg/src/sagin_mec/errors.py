"""Exception hierarchy shared by the model, the solvers and the CLI."""


class SaginError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SaginError, ValueError):
    pass


class InfeasibleDecision(SaginError):
    """A decision uses a path with zero rate/frequency or has non-positive energy."""


class SolverError(SaginError):
    pass


class Infeasible(SolverError):
    pass


class Unbounded(SolverError):
    pass


class IterationLimit(SolverError):
    pass


class NodeLimit(SolverError):
    pass


class NoStrictInterior(SolverError):
    pass


class NumericalBreakdown(SolverError):
    pass


class InfeasibleAssociation(SolverError):
    pass


class InfeasibleOffload(SolverError):
    pass


class InfeasibleBudget(SolverError):
    pass


class ExpansionInfeasible(SolverError):
    pass


class NoFeasibleStart(SaginError):
    pass
