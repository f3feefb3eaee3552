"""Exception types raised by the toolkit."""


class DPAError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DPAError, ValueError):
    """Input failed a precondition check."""


class InvalidPolicy(ValidationError):
    """A discretization policy has an invalid field."""


class AlphabetMismatch(ValidationError):
    """Two discrete distributions are not on the same alphabet."""


class GridMismatch(ValidationError):
    """Privacy loss distributions do not share a grid spacing."""


class InfiniteMass(ValidationError):
    """The operation needs a loss distribution without an atom at +inf."""


class Unachievable(ValidationError):
    """The requested target cannot be met, e.g. delta below the +inf atom."""


class BoundaryTooSmall(ValidationError):
    """The integration domain is too small for the requested problem."""


class Infeasible(ValidationError):
    """An optimization problem has no feasible point."""


class NumericError(DPAError, ArithmeticError):
    """Base class for numerical failures."""


class NonIntegrable(NumericError):
    """Quadrature did not reach the requested tolerance."""


class MemoryBudgetExceeded(NumericError):
    """A computation would exceed the configured memory budget."""


class NoGroundState(NumericError):
    """The eigenvalue search did not find a node-free solution."""


class NotConverged(NumericError):
    """An iterative solver stopped before meeting its tolerance.

    The best iterate found so far is available as ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
