import tempfile
import unittest
from pathlib import Path

import numpy as np

from mtmct_tracker.config import PipelineConfig
from mtmct_tracker.errors import ParseError, ValidationError
from mtmct_tracker.geometry import box_area, box_center
from mtmct_tracker.ingest import Detection, EmbeddingTable
from mtmct_tracker.sct import Trajectory
from mtmct_tracker.zones import (
    Zone,
    ZoneClass,
    ZoneMerge,
    build_zones,
    classify_zone,
    mean_shift,
    parse_zones,
    reconnect_isolated,
    write_zones,
    zone_densities,
)


def fixed_point(points, bandwidth):
    """Iterate the weighted mean of a cluster to machine precision."""
    points = np.asarray(points, dtype=float)
    center = points.mean(axis=0)
    for _ in range(1000):
        distances = np.linalg.norm(points - center, axis=1)
        weights = np.exp(-distances / (2.0 * bandwidth**2))
        updated = weights @ points / weights.sum()
        if np.linalg.norm(updated - center) < 1e-13:
            break
        center = updated
    return center


def trajectory(local_id, boxes, camera_id=1):
    """A trajectory from ``(frame, (x, y))`` pairs with 80x50 boxes."""
    return Trajectory(
        camera_id=camera_id,
        local_id=local_id,
        detections=tuple(
            Detection(camera_id, frame, local_id, (x, y, 80.0, 50.0))
            for frame, (x, y) in boxes
        ),
    )


class MeanShiftTestCase(unittest.TestCase):
    """Clustering endpoints."""

    def test_single_point(self):
        result = mean_shift([(5.0, 7.0)], bandwidth=10.0)
        self.assertLessEqual(result.iterations, 1)
        np.testing.assert_array_equal([[5.0, 7.0]], result.centroids)
        np.testing.assert_array_equal([0], result.labels)

    def test_identical_points(self):
        result = mean_shift([(3.0, 3.0)] * 4, bandwidth=10.0)
        self.assertLessEqual(result.iterations, 1)
        np.testing.assert_array_equal([[3.0, 3.0]], result.centroids)
        np.testing.assert_array_equal([0, 0, 0, 0], result.labels)

    def test_two_planted_clusters(self):
        rng = np.random.default_rng(3)
        bandwidth = 10.0
        left = rng.uniform(-3.0, 3.0, size=(20, 2))
        right = rng.uniform(-3.0, 3.0, size=(15, 2)) + [10 * bandwidth, 0.0]
        result = mean_shift(np.vstack([left, right]).tolist(), bandwidth)
        self.assertEqual(2, len(result.centroids))
        centroids = sorted(result.centroids.tolist())
        np.testing.assert_allclose(
            fixed_point(left, bandwidth), centroids[0], atol=1e-3
        )
        np.testing.assert_allclose(
            fixed_point(right, bandwidth), centroids[1], atol=1e-3
        )
        self.assertEqual(1, len(set(result.labels[:20])))
        self.assertEqual(1, len(set(result.labels[20:])))
        self.assertNotEqual(result.labels[0], result.labels[20])

    def test_empty_and_invalid_input(self):
        result = mean_shift([], bandwidth=10.0)
        self.assertEqual((0, 2), result.centroids.shape)
        self.assertEqual(0, result.labels.size)
        with self.assertRaises(ValidationError):
            mean_shift([(0.0, float("nan"))], bandwidth=10.0)
        with self.assertRaises(ValidationError):
            mean_shift([(0.0, 0.0)], bandwidth=0.0)


class ClassificationTestCase(unittest.TestCase):
    """Zone classes from endpoint counts."""

    def test_truth_table(self):
        config = PipelineConfig(rho_entry=0.8, rho_exit=0.8, rho_traffic_aware=0.8)
        self.assertEqual(ZoneClass.ENTRY, classify_zone(9, 1, config))
        self.assertEqual(ZoneClass.EXIT, classify_zone(1, 9, config))
        self.assertEqual(ZoneClass.TRAFFIC_AWARE, classify_zone(5, 5, config))
        self.assertEqual(ZoneClass.DONT_CARE, classify_zone(7, 3, config))

    def test_densities(self):
        self.assertEqual(
            (0.7, 0.3, 0.6), tuple(round(d, 12) for d in zone_densities(7, 3))
        )
        with self.assertRaises(ValidationError):
            zone_densities(0, 0)

    def test_entry_checked_first(self):
        config = PipelineConfig(rho_entry=0.0, rho_exit=0.0, rho_traffic_aware=0.0)
        self.assertEqual(ZoneClass.ENTRY, classify_zone(5, 5, config))


class BuildZonesTestCase(unittest.TestCase):
    """Zones from trajectory endpoints."""

    def test_build_zones(self):
        trajectories = [
            trajectory(i, [(10 * i, (0.0, 100.0)), (10 * i + 5, (1000.0, 100.0))])
            for i in range(1, 7)
        ]
        # A lone trajectory far from the others forms clusters too small to keep.
        trajectories.append(trajectory(7, [(80, (0.0, 600.0)), (85, (1000.0, 600.0))]))
        zones = build_zones(trajectories, PipelineConfig())
        self.assertEqual([1, 2], [z.zone_id for z in zones])
        entry, exit_zone = zones
        self.assertEqual(ZoneClass.ENTRY, entry.zone_class)
        self.assertEqual((6, 0), (entry.n_entry, entry.n_exit))
        self.assertEqual(ZoneClass.EXIT, exit_zone.zone_class)
        self.assertEqual((0, 6), (exit_zone.n_entry, exit_zone.n_exit))
        center_x, center_y = box_center(entry.bbox)
        self.assertAlmostEqual(40.0, center_x)
        self.assertAlmostEqual(125.0, center_y)
        # Grown to 1.5 mean endpoint box areas.
        self.assertAlmostEqual(1.5 * 80.0 * 50.0, box_area(entry.bbox), places=6)

    def test_no_trajectories(self):
        self.assertEqual([], build_zones([], PipelineConfig()))

    def test_zone_file(self):
        zones = [
            Zone(2, 1, (0.0, 10.0, 98.5, 61.25), 6, 0, ZoneClass.ENTRY),
            Zone(1, 1, (500.0, 80.0, 200.0, 100.0), 3, 3, ZoneClass.TRAFFIC_AWARE),
        ]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "zones.csv"
            write_zones(path, zones)
            self.assertEqual(
                "1,1,traffic_aware,500,80,200,100,3,3\n2,1,entry,0,10,98.5,61.25,6,0\n",
                path.read_text(encoding="utf-8"),
            )
            self.assertEqual({1: [zones[1]], 2: [zones[0]]}, parse_zones(path))

            path.write_text("1,1,sideways,0,0,1,1,0,0\n", encoding="utf-8")
            with self.assertRaises(ParseError):
                parse_zones(path)


class ReconnectTestCase(unittest.TestCase):
    """First in, first out reconnection in traffic-aware zones."""

    def setUp(self):
        self.zone = Zone(
            1, 3, (400.0, 80.0, 200.0, 100.0), 3, 3, ZoneClass.TRAFFIC_AWARE
        )
        self.trajectories = [
            trajectory(1, [(0, (0.0, 100.0)), (10, (450.0, 100.0))]),
            trajectory(2, [(5, (0.0, 100.0)), (20, (452.0, 100.0))]),
            trajectory(3, [(100, (451.0, 101.0)), (130, (1000.0, 100.0))]),
            trajectory(4, [(110, (450.0, 99.0)), (140, (1000.0, 100.0))]),
            trajectory(5, [(105, (449.0, 100.0)), (135, (1000.0, 300.0))]),
        ]
        vectors = {
            1: (1.0, 0.0),
            2: (0.0, 1.0),
            3: (1.0, 0.0),
            4: (0.0, 1.0),
            5: (1.0, 0.0),
        }
        self.embeddings = EmbeddingTable(
            2,
            {
                d.key: np.asarray(vectors[t.local_id])
                for t in self.trajectories
                for d in t.detections
            },
        )

    def test_fifo_merges(self):
        merges = []
        merged = reconnect_isolated(
            self.trajectories, [self.zone], self.embeddings, PipelineConfig(), merges
        )
        self.assertEqual([1, 2, 5], [t.local_id for t in merged])
        self.assertEqual([0, 10, 100, 130], [d.frame for d in merged[0].detections])
        self.assertEqual([5, 20, 110, 140], [d.frame for d in merged[1].detections])
        self.assertEqual(
            [
                ZoneMerge(1, 3, (1, 1), (1, 3), 10, 100),
                ZoneMerge(1, 3, (1, 2), (1, 4), 20, 110),
            ],
            merges,
        )
        # Heads leave the queues in the order they entered.
        self.assertEqual(
            sorted(m.exit_frame for m in merges), [m.exit_frame for m in merges]
        )

    def test_expired_heads(self):
        merges = []
        config = PipelineConfig(reconnect_ttl_frames=50)
        merged = reconnect_isolated(
            self.trajectories, [self.zone], self.embeddings, config, merges
        )
        self.assertEqual(5, len(merged))
        self.assertEqual([], merges)

    def test_without_traffic_zones(self):
        entry = Zone(1, 3, (400.0, 80.0, 200.0, 100.0), 6, 0, ZoneClass.ENTRY)
        merged = reconnect_isolated(
            list(reversed(self.trajectories)),
            [entry],
            self.embeddings,
            PipelineConfig(),
        )
        self.assertEqual([1, 2, 3, 4, 5], [t.local_id for t in merged])

    def test_no_trajectories(self):
        merges = []
        merged = reconnect_isolated(
            [], [self.zone], EmbeddingTable(2, {}), PipelineConfig(), merges
        )
        self.assertEqual([], merged)
        self.assertEqual([], merges)


if __name__ == "__main__":
    unittest.main()
