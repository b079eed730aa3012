"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value or combination of values."""


class ShapeError(ValueError):
    """Array arguments with incompatible dimensions."""


class DomainError(ValueError):
    """Scalar argument outside its mathematical domain."""


class NumericError(ValueError):
    """Non-finite values where finite arithmetic is required."""


class ParseError(ValueError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
