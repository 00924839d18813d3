"""Exception hierarchy.

CLI exit codes are attached to the classes so the front end can map any
library failure to the documented status without a lookup table.
"""


class MnlqrError(Exception):
    exit_code = 1


class InvalidInputError(MnlqrError, ValueError):
    exit_code = 1


class DimensionError(InvalidInputError):
    pass


class InvalidSystemError(InvalidInputError):
    pass


class SingularMatrixError(MnlqrError, ArithmeticError):
    exit_code = 2


class NotConvergedError(MnlqrError, RuntimeError):
    """Riccati iteration hit ``max_iter``; the system is presumed not MS-stabilizable."""

    exit_code = 2

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class NotMSSError(MnlqrError, ArithmeticError):
    """A closed loop is not mean-square stable (spectral radius >= 1)."""

    exit_code = 2

    def __init__(self, message, radius=None):
        super().__init__(message)
        self.radius = radius


class SolverDefectError(MnlqrError, RuntimeError):
    """The Riccati iteration converged to a gain that is not mean-square stabilizing."""

    exit_code = 2


class BoundViolationError(MnlqrError, AssertionError):
    exit_code = 3
