"""Exception hierarchy shared by all estimators."""


class L2KLError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(L2KLError, ValueError):
    """Non-finite, mis-shaped or out-of-domain input."""


class DegenerateDataError(InvalidInputError):
    """Data with zero robust scale (e.g. all points equal)."""


class QuadratureError(L2KLError):
    """Adaptive quadrature failed to reach the requested tolerance.

    The last estimate is kept on ``estimate`` so callers can decide
    whether it is usable.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class SolverError(L2KLError):
    """The Newton iteration could not make progress.

    ``theta`` holds the last iterate.
    """

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class SingularMatrixError(L2KLError, ArithmeticError):
    """A matrix that must be inverted is (numerically) singular."""

    def __init__(self, name, message=None):
        super().__init__(message or f"matrix {name} is singular")
        self.name = name
