"""General utilities for validating and formatting values."""

import math
import numbers
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

from mtmct_tracker.errors import ValidationError

LOG_LEVELS = (
    "CRITICAL",
    "ERROR",
    "WARNING",
    "SUCCESS",
    "INFO",
    "DEBUG",
    "TRACE",
)


def assert_is_file(filepath: Union[str, Path]) -> Path:
    """Raise an error if filepath is not a valid path to a real file.

    Args:
        filepath: The path to check.

    Raises:
        FileNotFoundError: If filepath is not a valid path to a real file.

    Returns:
        The filepath as a Path.
    """
    path = Path(filepath)
    if not path.is_file():
        raise FileNotFoundError(f"{path} is not a file")
    return path


def validate_log_level(log_level: str) -> str:
    """Check the log level is one loguru knows.

    Log level is not case sensitive and is converted to uppercase before checking.

    Args:
        log_level: The log level to check.

    Raises:
        ValidationError: If the log level is not a valid log level.

    Returns:
        The log level in uppercase.
    """
    log_level = log_level.upper()
    if log_level not in LOG_LEVELS:
        raise ValidationError(f"{log_level} not in {LOG_LEVELS}")
    return log_level


def validate_number(value: Any, name: str) -> float:
    """Check that value is a real number, not a string or a bool.

    Args:
        value: The value to check.
        name: The name of the value, for the error message.

    Raises:
        ValidationError: If value is not a real number.

    Returns:
        The value as a float.
    """
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ValidationError(f"{name} must be a number but is {value!r}")
    return float(value)


def validate_flag(value: Any, name: str) -> bool:
    """Check that value is a bool.

    Raises:
        ValidationError: If value is not True or False.
    """
    if not isinstance(value, bool):
        raise ValidationError(f"{name} must be true or false but is {value!r}")
    return value


def validate_unit_interval(value: float, name: str) -> float:
    """Check that value lies in [0, 1].

    Args:
        value: The value to check.
        name: The name of the value, for the error message.

    Raises:
        ValidationError: If value is not a finite number in [0, 1].

    Returns:
        The value as a float.
    """
    value = validate_number(value, name)
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must be in [0, 1] but is {value}")
    return value


def validate_positive(value: float, name: str) -> float:
    """Check that value is a finite number greater than zero.

    Args:
        value: The value to check.
        name: The name of the value, for the error message.

    Raises:
        ValidationError: If value is not finite and positive.

    Returns:
        The value as a float.
    """
    value = validate_number(value, name)
    if not math.isfinite(value) or value <= 0.0:
        raise ValidationError(f"{name} must be positive but is {value}")
    return value


def validate_count(value: int, name: str, minimum: int = 1) -> int:
    """Check that value is an integer no smaller than minimum.

    Args:
        value: The value to check.
        name: The name of the value, for the error message.
        minimum: The smallest allowed value.

    Raises:
        ValidationError: If value is not an integer or is below minimum.

    Returns:
        The value.
    """
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{name} must be an integer but is {value!r}")
    if value < minimum:
        raise ValidationError(f"{name} must be at least {minimum} but is {value}")
    return value


def validate_percentiles(percentiles: Tuple[float, float]) -> Tuple[float, float]:
    """Check a (low, high) percentile pair.

    Args:
        percentiles: The low and high percentile.

    Raises:
        ValidationError: If the pair is not ordered within [0, 100].

    Returns:
        The pair as floats.
    """
    if len(percentiles) != 2:
        raise ValidationError(f"Expected two percentiles but got {percentiles}")
    low = validate_number(percentiles[0], "low percentile")
    high = validate_number(percentiles[1], "high percentile")
    if not 0.0 <= low <= high <= 100.0:
        raise ValidationError(
            f"Percentiles must satisfy 0 <= low <= high <= 100 but are {low}, {high}"
        )
    return low, high


def parse_int_keys(mapping: Mapping[Any, Any], name: str) -> Dict[int, int]:
    """Convert a JSON object with camera id keys into an int to int dict.

    Args:
        mapping: An object such as ``{"1": 0, "2": 30}``.
        name: The name of the setting, for the error message.

    Raises:
        ValidationError: If a key or value is not an integer.

    Returns:
        A dict such as ``{1: 0, 2: 30}``.
    """
    result: Dict[int, int] = {}
    for key, value in mapping.items():
        try:
            result[int(key)] = int(value)
        except (TypeError, ValueError) as exc:
            raise ValidationError(
                f"{name} must map integers to integers but has {key!r}: {value!r}"
            ) from exc
    return result


def format_number(value: float) -> str:
    """Format a number with 6 significant digits, locale independent.

    Args:
        value: The number to format.

    Returns:
        The shortest ``%g`` representation with 6 significant digits.
    """
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return format(float(value), ".6g")
