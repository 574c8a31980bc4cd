"""Exception types shared across the package."""


class ConvqaError(Exception):
    """Base class for all errors raised by convqa."""


class DimensionError(ConvqaError):
    """Tensor shapes are incompatible with the requested operation."""


class ConfigError(ConvqaError):
    """Invalid or inconsistent configuration value."""


class MaskError(ConvqaError):
    """A mask violates its contract (e.g. a row with no valid position)."""


class ParseError(ConvqaError):
    """Malformed input file.  Carries a line number when one is known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DataError(ConvqaError):
    """Input data violates a documented precondition."""


class TrainingError(ConvqaError):
    """Training had to abort (e.g. non-finite loss)."""
