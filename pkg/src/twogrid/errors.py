"""Exception types shared across the package."""


class TwoGridError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(TwoGridError, ValueError):
    """Array shape or length does not match what the operation requires."""


class BoundsError(TwoGridError, ValueError):
    """A scalar argument or coordinate falls outside its permitted range."""


class ArgumentError(TwoGridError, ValueError):
    """An argument is malformed or inconsistent with the others."""


class NumericError(TwoGridError, ArithmeticError):
    """Non-finite values were encountered."""


class FormatError(TwoGridError):
    """A file does not follow the expected binary layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, message, step):
        super().__init__(f"{message} at step {step}")
        self.step = step
