"""Exception types shared across the pipeline."""


class RffError(Exception):
    """Base class for all package errors."""


class InvalidArgument(RffError, ValueError):
    pass


class ShapeError(RffError, ValueError):
    pass


class FormatError(RffError):
    """Malformed on-disk artifact. ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DegenerateData(RffError, ValueError):
    pass


class InvalidState(RffError, RuntimeError):
    pass


class CalibrationError(RffError):
    pass


class NumericalError(RffError, ArithmeticError):
    pass


class ConfigError(RffError):
    pass


class MissingStage(RffError):
    """A prerequisite pipeline stage has not produced its outputs."""
