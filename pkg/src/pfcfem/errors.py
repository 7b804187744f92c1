"""Exception types shared across the package."""


class ModelViolationError(ValueError):
    """A model-parameter constraint is violated (for example the SAV shift
    leaves the auxiliary-variable radicand nonpositive)."""


class SolverFailureError(RuntimeError):
    """An iterative linear solve failed to reach the requested tolerance.

    Carries the final relative residual so callers can report it.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularSystemError(RuntimeError):
    """The rank-one update denominator vanished; the system is singular."""


class ExpressionError(ValueError):
    """Syntax or name error while parsing an initial-condition expression."""

    def __init__(self, message, position=None):
        if position is not None:
            message = "%s (at position %d)" % (message, position)
        super().__init__(message)
        self.position = position


class ConfigError(ValueError):
    """Invalid run configuration; message includes the offending key path."""
