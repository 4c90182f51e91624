class ValidationError(ValueError):
    """Raised when an input violates a documented precondition or invariant."""


class ParseError(ValueError):
    """Raised when an external file is malformed; the message names the offending
    line or field."""
