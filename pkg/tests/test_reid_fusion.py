import math
import tempfile
import unittest
from pathlib import Path

import numpy as np

from mtmct_tracker.config import PipelineConfig
from mtmct_tracker.errors import DegenerateError, DimensionError, ValidationError
from mtmct_tracker.ingest import (
    AttributeTable,
    Detection,
    EmbeddingTable,
    MetadataTable,
    WheelKeypoints,
)
from mtmct_tracker.reid_fusion import (
    direction_angle,
    direction_bin,
    fuse,
    metadata_attribute_order,
    metadata_feature,
    pair_distance,
    trajectory_appearance,
    trajectory_direction_histogram,
    trajectory_feature,
    write_fused_features,
)
from mtmct_tracker.sct import Trajectory


def wheels_towards(dx, dy):
    """Wheels of a vehicle whose front axle centre is (dx, dy) from its back."""
    return WheelKeypoints(
        front_left=(dx, dy + 1.0),
        front_right=(dx, dy - 1.0),
        back_left=(0.0, 1.0),
        back_right=(0.0, -1.0),
    )


class AppearanceTestCase(unittest.TestCase):
    """Pooling frame embeddings."""

    def test_single_frame(self):
        np.testing.assert_allclose([0.6, 0.8], trajectory_appearance([[3.0, 4.0]]))

    def test_identical_frames(self):
        pooled = trajectory_appearance([[1.0, 1.0]] * 4, weights=[0.1, 5.0, 0.0, 2.0])
        np.testing.assert_allclose([math.sqrt(0.5)] * 2, pooled)

    def test_clip_pooling(self):
        u, w = [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]
        pooled = trajectory_appearance([u] * 4 + [w] * 4, clip_size=4)
        np.testing.assert_allclose([math.sqrt(0.5), math.sqrt(0.5), 0.0], pooled)

        # Clips are averaged without regard to their length.
        pooled = trajectory_appearance([u] * 4 + [w], clip_size=4)
        np.testing.assert_allclose([math.sqrt(0.5), math.sqrt(0.5), 0.0], pooled)

    def test_weighted_clip(self):
        pooled = trajectory_appearance(
            [[1.0, 0.0], [0.0, 1.0]], weights=[3.0, 1.0], clip_size=2
        )
        np.testing.assert_allclose(np.array([3.0, 1.0]) / math.sqrt(10.0), pooled)

    def test_invalid_input(self):
        with self.assertRaises(ValidationError):
            trajectory_appearance([])
        with self.assertRaises(ValidationError):
            trajectory_appearance([[1.0, 0.0]], weights=[1.0, 1.0])
        with self.assertRaises(ValidationError):
            trajectory_appearance([[1.0, 0.0]], weights=[0.0])
        with self.assertRaises(DegenerateError):
            trajectory_appearance([[1.0, 0.0], [-1.0, 0.0]])


class MetadataTestCase(unittest.TestCase):
    """Averaging class probabilities and fusing them with appearance."""

    def test_metadata_feature(self):
        np.testing.assert_allclose([0.2, 0.8], metadata_feature([[0.2, 0.8]]))
        np.testing.assert_allclose([0.5, 0.5], metadata_feature([[1, 0], [0, 1]]))
        np.testing.assert_allclose(
            [0.7, 0.3], metadata_feature([[0.6, 0.4], [0.8, 0.2], [0.7, 0.3]])
        )
        with self.assertRaises(ValidationError):
            metadata_feature([[1.0, 0.0], [0.2, 0.3, 0.5]])

    def test_fuse_dimensions(self):
        appearance = np.array([1.0, 0.0, 0.0, 0.0])
        fused = fuse(
            appearance, [np.full(2, 0.5), np.full(3, 1 / 3), np.full(2, 0.5)], 2.0
        )
        self.assertEqual(11, fused.dim)
        self.assertEqual((11,), fused.full.shape)
        self.assertAlmostEqual(2.0, float(fused.metadata[1].sum()))

    def test_fuse_validation(self):
        with self.assertRaises(ValidationError):
            fuse(np.array([1.0, 1.0]), [], 1.0)
        with self.assertRaises(ValidationError):
            fuse(np.array([1.0, 0.0]), [np.array([0.5, 0.6])], 1.0)
        with self.assertRaises(ValidationError):
            fuse(np.array([1.0, 0.0]), [], -1.0)

    def test_pair_distance(self):
        appearance = np.array([1.0, 0.0])
        car = fuse(appearance, [np.array([1.0, 0.0])], 1.0)
        truck = fuse(appearance, [np.array([0.0, 1.0])], 1.0)
        self.assertEqual(0.0, pair_distance(car, car))
        self.assertAlmostEqual(math.sqrt(2.0), pair_distance(car, truck))

        near = fuse(appearance, [np.array([0.8, 0.2])], 1.0)
        self.assertAlmostEqual(0.2828, pair_distance(car, near), places=4)
        self.assertAlmostEqual(
            math.sqrt(2.0), pair_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        )

        # Without metadata weight only appearance is compared.
        self.assertEqual(
            0.0,
            pair_distance(
                fuse(appearance, [np.array([1.0, 0.0])], 0.0),
                fuse(appearance, [np.array([0.0, 1.0])], 0.0),
            ),
        )
        with self.assertRaises(DimensionError):
            pair_distance(car, np.zeros(3))

    def test_distance_grows_with_weight(self):
        appearance = np.array([0.0, 1.0])
        distances = [
            pair_distance(
                fuse(appearance, [np.array([0.9, 0.1])], weight),
                fuse(appearance, [np.array([0.3, 0.7])], weight),
            )
            for weight in (0.0, 0.5, 1.0, 2.0)
        ]
        self.assertEqual(sorted(distances), distances)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            a, b, c = (
                fuse(
                    trajectory_appearance(rng.normal(size=(2, 6))),
                    [rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(4))],
                    float(rng.uniform(0.0, 2.0)),
                )
                for _ in range(3)
            )
            self.assertLessEqual(
                pair_distance(a, c), pair_distance(a, b) + pair_distance(b, c) + 1e-12
            )

    def test_attribute_order(self):
        table = {
            name: AttributeTable(name, 2, {})
            for name in ("color", "make_year", "type", "body")
        }
        self.assertEqual(
            ["type", "color", "body", "make_year"],
            metadata_attribute_order(MetadataTable(table)),
        )


class TrajectoryFeatureTestCase(unittest.TestCase):
    """Features of whole trajectories."""

    def setUp(self):
        self.trajectory = Trajectory(
            3,
            7,
            tuple(Detection(3, f, 0, (0.0, 0.0, 10.0, 10.0)) for f in range(1, 3)),
        )
        keys = [d.key for d in self.trajectory.detections]
        self.embeddings = EmbeddingTable(
            2, {keys[0]: np.array([2.0, 0.0]), keys[1]: np.array([0.0, 2.0])}
        )
        self.metadata = MetadataTable(
            {
                "color": AttributeTable(
                    "color",
                    2,
                    {keys[0]: np.array([1.0, 0.0]), keys[1]: np.array([0.5, 0.5])},
                ),
                "type": AttributeTable(
                    "type", 1, {keys[0]: np.array([1.0]), keys[1]: np.array([1.0])}
                ),
            }
        )

    def test_trajectory_feature(self):
        config = PipelineConfig(metadata_weight=0.5)
        feature = trajectory_feature(
            self.trajectory, self.embeddings, self.metadata, config
        )
        np.testing.assert_allclose(
            [math.sqrt(0.5), math.sqrt(0.5), 0.5, 0.375, 0.125], feature.full
        )
        appearance_only = trajectory_feature(
            self.trajectory, self.embeddings, None, config
        )
        self.assertEqual(2, appearance_only.dim)

    def test_write_fused_features(self):
        with_feature = Trajectory(
            3,
            7,
            self.trajectory.detections,
            fused_feature=np.array([0.6, 0.8, 0.25]),
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "fused_features.csv"
            write_fused_features(path, [with_feature, self.trajectory])
            self.assertEqual("3,7,0.6,0.8,0.25\n", path.read_text(encoding="utf-8"))


class DirectionTestCase(unittest.TestCase):
    """Driving direction from wheel keypoints."""

    def test_direction_angle(self):
        self.assertAlmostEqual(0.0, direction_angle(wheels_towards(1.0, 0.0)))
        self.assertAlmostEqual(90.0, direction_angle(wheels_towards(0.0, 1.0)))
        self.assertAlmostEqual(225.0, direction_angle(wheels_towards(-1.0, -1.0)))
        self.assertAlmostEqual(
            270.0, direction_angle(wheels_towards(0.0, 1.0), y_axis_down=True)
        )

    def test_degenerate_wheels(self):
        with self.assertRaises(DegenerateError):
            direction_angle(wheels_towards(0.0, 0.0))
        with self.assertRaises(ValidationError):
            direction_angle(wheels_towards(float("nan"), 0.0))

    def test_direction_bin(self):
        expected = {
            0.0: 0,
            9.99: 0,
            10.0: 1,
            45.0: 1,
            80.0: 2,
            90.0: 2,
            100.0: 3,
            180.0: 4,
            200.0: 5,
            265.0: 6,
            300.0: 7,
            349.99: 7,
            350.0: 0,
            355.0: 0,
        }
        self.assertEqual(expected, {theta: direction_bin(theta) for theta in expected})

    def test_bins_tile_the_circle(self):
        counts = np.bincount(
            [direction_bin(theta) for theta in np.arange(0.0, 360.0, 0.5)],
            minlength=8,
        )
        # 20 and 70 degree regions at two samples per degree.
        self.assertEqual([40, 140] * 4, counts.tolist())

        fine = np.bincount(
            [direction_bin(tenths / 10.0) for tenths in range(3600)], minlength=8
        )
        self.assertEqual([200, 700] * 4, fine.tolist())

    def test_direction_histogram(self):
        trajectory = Trajectory(
            1,
            1,
            tuple(Detection(1, f, 0, (0.0, 0.0, 10.0, 10.0)) for f in range(4)),
        )
        keypoints = {
            (1, 0, 0): wheels_towards(1.0, 0.0),
            (1, 1, 0): wheels_towards(1.0, 0.05),
            (1, 2, 0): wheels_towards(0.0, 0.0),
        }
        histogram = trajectory_direction_histogram(trajectory, keypoints)
        self.assertEqual([2, 0, 0, 0, 0, 0, 0, 0], histogram.tolist())


if __name__ == "__main__":
    unittest.main()
