"""Exception types shared across the toolkit."""


class ConvSimError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(ConvSimError):
    """Raised when an input document cannot be parsed.

    Carries enough location information (line number or JSON path) to point
    at the offending record.
    """

    def __init__(self, message, *, line=None, path=None):
        location = ""
        if line is not None:
            location = f" (line {line})"
        elif path is not None:
            location = f" (at {path})"
        super().__init__(f"{message}{location}")
        self.line = line
        self.path = path


class ValidationError(ConvSimError):
    """Raised when parsed data violates a documented invariant."""


class ExtractionError(ConvSimError):
    """Raised when a conversation does not support statistics extraction."""


class UnsupportedFormatError(ConvSimError):
    """Raised for audio inputs outside the supported WAV encoding."""
