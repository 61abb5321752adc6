"""Separation of variables for rank-2 Hitchin systems on hyperelliptic curves."""

from hitchin_sov.errors import ParseError, SovError

__version__ = "0.1.0"

__all__ = ["ParseError", "SovError", "__version__"]
