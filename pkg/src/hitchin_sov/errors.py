from __future__ import annotations


class SovError(Exception):
    """Raised when a computation cannot proceed; the message names the failure."""


class ParseError(SovError):
    """Malformed or unknown input in a JSON document."""
