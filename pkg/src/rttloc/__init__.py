"""Device-free multi-person indoor localization from WiFi round-trip-time fingerprints."""

from rttloc.errors import ParseError, ValidationError

__all__ = ["ParseError", "ValidationError"]
__version__ = "0.1.0"
