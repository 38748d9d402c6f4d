"""Exception hierarchy.

Invalid input and numerical failure are kept apart so the CLI can map them to
distinct exit codes.
"""


class FringecorrError(Exception):
    pass


class InvalidInputError(FringecorrError, ValueError):
    """Arguments or files that violate a documented precondition."""


class NumericalError(FringecorrError, RuntimeError):
    """A computation ran but could not produce a trustworthy result."""


class FitError(NumericalError):
    """Least-squares fit did not converge.

    ``best`` holds the best parameter vector seen so far (or None) and
    ``residual`` the corresponding residual sum of squares.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class NoSolutionError(NumericalError):
    pass
