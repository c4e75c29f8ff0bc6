"""Exception hierarchy shared by all subsystems."""


class LambdaInferError(Exception):
    """Base class for package errors."""


class DomainError(LambdaInferError, ValueError):
    """An argument lies outside an operation's mathematical domain."""


class DataFormatError(LambdaInferError, ValueError):
    """A dataset, config, or CSV file is malformed or inconsistent."""


class CapacityError(LambdaInferError, RuntimeError):
    """A computation exceeds a documented size guard."""


class NumericalError(LambdaInferError, RuntimeError):
    """A numerical routine failed to reach its requested tolerance.

    Carries the tolerance actually achieved so callers can decide whether
    the partial result is still usable.
    """

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class InfeasibleConstraints(LambdaInferError, RuntimeError):
    """A constraint set admits no probability measure."""
