"""Exception hierarchy shared by every subsystem."""


class SemFmlError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(SemFmlError, ValueError):
    pass


class ConstraintViolationError(SemFmlError, ValueError):
    """A decision breaks one of the allocation constraints.

    ``constraint`` names the violated rule, e.g. ``"rb-per-su"``.
    """

    def __init__(self, constraint: str, message: str):
        super().__init__(f"[{constraint}] {message}")
        self.constraint = constraint


class NumericFailureError(SemFmlError, ArithmeticError):
    def __init__(self, message: str, index: int | None = None):
        if index is not None:
            message = f"{message} (parameter index {index})"
        super().__init__(message)
        self.index = index


class ModeViolationError(SemFmlError):
    pass


class InsufficientDataError(SemFmlError, ValueError):
    pass


class DegenerateWorkloadError(SemFmlError, ValueError):
    pass


class UndefinedSNRError(SemFmlError, ZeroDivisionError):
    pass
