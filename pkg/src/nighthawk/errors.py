"""Exception types shared across the package."""


class NightHawkError(Exception):
    """Base class for all package errors."""


class InvalidInputError(NightHawkError, ValueError):
    """An argument violates an operation's precondition."""


class UndefinedCorrelationError(NightHawkError, ValueError):
    """A rank correlation has zero variance in at least one sequence."""


class NonPSDError(NightHawkError, ArithmeticError):
    """The GP Gram matrix could not be factorized as positive definite."""


class InvalidStateError(NightHawkError, RuntimeError):
    """A controller transition was requested from the wrong mode."""


class ConfigError(NightHawkError, ValueError):
    """A configuration file or value is malformed."""


class ObjectiveError(NightHawkError, RuntimeError):
    """The black-box objective raised during optimization.

    ``history`` holds the ``(x, y)`` evaluations committed before the failure;
    the original exception is chained as ``__cause__``.
    """

    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


class FrameError(NightHawkError, RuntimeError):
    """A mission frame failed; ``frame_index`` locates it."""

    def __init__(self, message, frame_index):
        super().__init__(f"frame {frame_index}: {message}")
        self.frame_index = frame_index
