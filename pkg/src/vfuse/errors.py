"""Exception types shared across the package."""


class VfuseError(Exception):
    """Base class for all package errors."""


class FormatError(VfuseError, ValueError):
    """A file does not follow the expected binary or text layout."""


class UnsupportedFormatError(FormatError):
    """A well-formed file uses a feature this package does not read."""


class CalibParseError(FormatError):
    """A calibration text file is missing a key or has a bad value count."""


class NumericError(VfuseError, ArithmeticError):
    """A computation produced non-finite values.

    ``stage`` names the step that failed so callers can report it.
    """

    def __init__(self, stage, message=None):
        self.stage = stage
        super().__init__(message or f"non-finite values produced in stage '{stage}'")
