"""Exception types raised across the package."""


class GpsError(Exception):
    """Base class for all package errors."""


class DimensionError(GpsError, ValueError):
    """Inputs disagree on horizon or dimensions."""


class IllConditionedError(GpsError, ArithmeticError):
    """The action-action block of the Q-function could not be made positive definite."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class EnvironmentFault(GpsError, FloatingPointError):
    """A simulated environment produced a non-finite state."""


class TrainingDivergence(GpsError, FloatingPointError):
    """Policy regression blew up."""


class ConfigError(GpsError, ValueError):
    """Invalid experiment configuration; carries the source line when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
