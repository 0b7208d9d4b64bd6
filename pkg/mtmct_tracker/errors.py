"""Exceptions raised by the tracking pipeline."""

from pathlib import Path
from typing import Optional, Union


class MtmctError(Exception):
    """Base class for every error the pipeline raises on bad input."""


class ValidationError(MtmctError, ValueError):
    """A value or structure violates one of its invariants."""


class ParseError(ValidationError):
    """A line of an input file could not be parsed.

    Args:
        message: What was wrong with the line.
        path: The file being parsed, if known.
        line_number: The 1-based line number, if known.
    """

    def __init__(
        self,
        message: str,
        path: Optional[Union[str, Path]] = None,
        line_number: Optional[int] = None,
    ) -> None:
        self.path = None if path is None else str(path)
        self.line_number = line_number
        location = ""
        if self.path is not None:
            location = self.path
        if line_number is not None:
            if location:
                location = f"{location}:{line_number}"
            else:
                location = f"line {line_number}"
        super().__init__(f"{location}: {message}" if location else message)


class CoverageError(ValidationError):
    """A required row is missing, e.g. a detection without an embedding."""


class DimensionError(ValidationError):
    """Vectors have the wrong or mismatching lengths."""


class DegenerateError(ValidationError):
    """The input is geometrically degenerate, e.g. coincident axle centres."""


class SizeError(ValidationError):
    """The instance is too large for an exhaustive computation."""
