"""Diagnostic logging set-up."""

import sys

from loguru import logger

from mtmct_tracker.utils import validate_log_level

LOG_FORMAT = "{time:HH:mm:ss} | {level: <8} | {name}:{function} - {message}"


def set_up_logging(level: str = "INFO") -> int:
    """Send all pipeline logging to stderr at the given level.

    Any sinks added before are removed, so that data written to stdout is never
    mixed with diagnostics.

    Args:
        level: A loguru level name, case insensitive.

    Returns:
        The id of the new sink.
    """
    logger.remove()
    return logger.add(sys.stderr, level=validate_log_level(level), format=LOG_FORMAT)
