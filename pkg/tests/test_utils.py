import unittest
from pathlib import Path

from mtmct_tracker.errors import ParseError, ValidationError
from mtmct_tracker.utils import (
    LOG_LEVELS,
    assert_is_file,
    format_number,
    parse_int_keys,
    validate_count,
    validate_log_level,
    validate_percentiles,
    validate_positive,
    validate_unit_interval,
)


class UtilsTestCase(unittest.TestCase):
    """Validation and formatting helpers."""

    def test_assert_is_file(self):
        afilethatexists = str(Path(__file__))
        afilethatdoesnotexist = "afilethatdoesnotexist.tmp"
        self.assertEqual(Path(afilethatexists), assert_is_file(afilethatexists))
        with self.assertRaises(FileNotFoundError):
            assert_is_file(afilethatdoesnotexist)

    def test_validate_log_level(self):
        for level in LOG_LEVELS:
            self.assertEqual(level, validate_log_level(level))
        self.assertEqual("DEBUG", validate_log_level("debug"))
        with self.assertRaises(ValidationError) as cm:
            validate_log_level("hi")
        self.assertEqual(f"HI not in {LOG_LEVELS}", str(cm.exception))

    def test_validate_unit_interval(self):
        self.assertEqual(0.0, validate_unit_interval(0, "rho"))
        self.assertEqual(1.0, validate_unit_interval(1, "rho"))
        with self.assertRaises(ValidationError) as cm:
            validate_unit_interval(1.5, "rho")
        self.assertEqual("rho must be in [0, 1] but is 1.5", str(cm.exception))
        with self.assertRaises(ValidationError):
            validate_unit_interval(float("nan"), "rho")

    def test_validate_positive(self):
        self.assertEqual(2.5, validate_positive(2.5, "bandwidth"))
        for bad in (0.0, -1.0, float("inf")):
            with self.assertRaises(ValidationError):
                validate_positive(bad, "bandwidth")

    def test_validate_count(self):
        self.assertEqual(3, validate_count(3, "gap_max"))
        self.assertEqual(0, validate_count(0, "gap_frames", minimum=0))
        with self.assertRaises(ValidationError) as cm:
            validate_count(0, "gap_max")
        self.assertEqual("gap_max must be at least 1 but is 0", str(cm.exception))
        with self.assertRaises(ValidationError):
            validate_count(2.0, "gap_max")  # type: ignore[arg-type]
        with self.assertRaises(ValidationError):
            validate_count(True, "gap_max")

    def test_validate_percentiles(self):
        self.assertEqual((5.0, 95.0), validate_percentiles((5, 95)))
        self.assertEqual((0.0, 0.0), validate_percentiles((0, 0)))
        for bad in ((95, 5), (-1, 50), (50, 101)):
            with self.assertRaises(ValidationError):
                validate_percentiles(bad)

    def test_parse_int_keys(self):
        self.assertEqual({1: 0, 2: 30}, parse_int_keys({"1": 0, "2": "30"}, "x"))
        with self.assertRaises(ValidationError) as cm:
            parse_int_keys({"a": 1}, "frame_offsets")
        self.assertEqual(
            "frame_offsets must map integers to integers but has 'a': 1",
            str(cm.exception),
        )

    def test_format_number(self):
        self.assertEqual("3", format_number(3.0))
        self.assertEqual("-12", format_number(-12))
        self.assertEqual("0.5", format_number(0.5))
        self.assertEqual("0.123457", format_number(0.1234567))
        self.assertEqual("1234.57", format_number(1234.5678))
        self.assertEqual("1e-07", format_number(1e-7))


class ErrorsTestCase(unittest.TestCase):
    """Exception formatting."""

    def test_parse_error_location(self):
        self.assertEqual(
            "dets.csv:4: bad field", str(ParseError("bad field", "dets.csv", 4))
        )
        self.assertEqual("line 4: bad field", str(ParseError("bad field", None, 4)))
        self.assertEqual(
            "dets.csv: bad field", str(ParseError("bad field", "dets.csv"))
        )
        self.assertEqual("bad field", str(ParseError("bad field")))
        self.assertIsInstance(ParseError("x"), ValueError)


if __name__ == "__main__":
    unittest.main()
