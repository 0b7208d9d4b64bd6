import json
import tempfile
import unittest
from pathlib import Path

from mtmct_tracker import constants
from mtmct_tracker.config import PipelineConfig
from mtmct_tracker.errors import ValidationError


class PipelineConfigTestCase(unittest.TestCase):
    """Loading and validating the pipeline configuration."""

    def test_defaults(self):
        config = PipelineConfig()
        self.assertEqual(constants.DEFAULT_BANDWIDTH, config.bandwidth)
        self.assertEqual(64, config.gap_max)
        self.assertEqual(0.8, config.rho_traffic_aware)
        self.assertEqual(0, config.frame_offset(7))

    def test_dict_round_trip(self):
        config = PipelineConfig(
            gap_max=32, edge_weights=(1.0, 0.0, 0.5), frame_offsets={2: 30}
        )
        document = config.to_dict()
        self.assertEqual({"2": 30}, document["frame_offsets"])
        self.assertEqual([1.0, 0.0, 0.5], document["edge_weights"])
        # The dict survives JSON.
        self.assertEqual(
            config, PipelineConfig.from_dict(json.loads(json.dumps(document)))
        )

    def test_from_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "config.json"
            path.write_text(
                json.dumps({"bandwidth": 40, "frame_offsets": {"3": 12}}),
                encoding="utf-8",
            )
            config = PipelineConfig.from_json(path)
            self.assertEqual(40.0, config.bandwidth)
            self.assertEqual(12, config.frame_offset(3))

            path.write_text("[1, 2]", encoding="utf-8")
            with self.assertRaises(ValidationError) as cm:
                PipelineConfig.from_json(path)
            self.assertIn("must contain a JSON object", str(cm.exception))

            path.write_text("{", encoding="utf-8")
            with self.assertRaises(ValidationError):
                PipelineConfig.from_json(path)

    def test_unknown_key(self):
        with self.assertRaises(ValidationError) as cm:
            PipelineConfig.from_dict({"bandwith": 10, "zeta": 1})
        self.assertEqual("Unknown config keys: bandwith, zeta", str(cm.exception))

    def test_badly_typed_values(self):
        invalid = (
            {"bandwidth": "wide"},
            {"rho_exit": [0.5]},
            {"edge_weights": 0.5},
            {"window_percentiles": [0, "all"]},
            {"frame_offsets": [1, 2]},
            {"gap_max": 6.5},
        )
        for values in invalid:
            with self.assertRaises(ValidationError, msg=str(values)):
                PipelineConfig.from_dict(values)

        with self.assertRaises(ValidationError) as cm:
            PipelineConfig.from_dict({"bandwidth": "wide"})
        self.assertEqual("bandwidth must be a number but is 'wide'", str(cm.exception))

    def test_reconnect_flag(self):
        self.assertTrue(PipelineConfig().reconnect)
        config = PipelineConfig.from_dict({"reconnect": False})
        self.assertFalse(config.reconnect)
        self.assertFalse(config.to_dict()["reconnect"])

    def test_invalid_values(self):
        invalid = (
            {"bandwidth": 0},
            {"rho_entry": 1.2},
            {"gap_max": 0},
            {"edge_weights": (1.0, -1.0, 0.0)},
            {"edge_weights": (1.0, 1.0)},
            {"window_percentiles": (90.0, 10.0)},
            {"cluster_threshold": -0.1},
            {"cluster_iterations": 0},
            {"metadata_weight": -1.0},
            {"eval_iou": 1.0},
            {"bandwidth": "wide"},
            {"eval_iou": "half"},
            {"metadata_weight": None},
            {"edge_weights": (1.0, "a", 0.0)},
            {"reconnect": "no"},
            {"y_axis_down": 1},
        )
        for values in invalid:
            with self.assertRaises(ValidationError, msg=str(values)):
                PipelineConfig(**values)


if __name__ == "__main__":
    unittest.main()
