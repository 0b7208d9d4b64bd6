import math
import unittest

import numpy as np

from mtmct_tracker.clm import CameraLink, CameraLinkModel, Transition, ZonePair
from mtmct_tracker.errors import SizeError, ValidationError
from mtmct_tracker.ingest import Detection
from mtmct_tracker.mtmct import (
    EXCLUDED,
    DistanceMatrix,
    GlobalAssignment,
    LinkedPair,
    MatchedPair,
    bip_objective,
    brute_force_bip,
    build_distance_matrix,
    global_tracks,
    hierarchical_cluster,
)
from mtmct_tracker.sct import Trajectory


def matrix_of(entries, n, keys=None, spans=(), links=None):
    """A matrix with the given ``{(i, j): distance}`` entries, EXCLUDED elsewhere."""
    values = np.full((n, n), EXCLUDED)
    for (i, j), distance in entries.items():
        values[i, j] = values[j, i] = distance
    if keys is None:
        # One camera per row, so only the distances matter.
        keys = tuple((row + 1, 1) for row in range(n))
    return DistanceMatrix(tuple(keys), values, tuple(spans), links or {})


def planted_instance(rng, delta, intra, inter, excluded_rate=0.0):
    """Random clusters with intra and inter distances drawn from given ranges."""
    n = int(rng.integers(1, 9))
    labels = rng.integers(0, int(rng.integers(1, n + 1)), size=n)
    entries = {}
    for i in range(n):
        for j in range(i + 1, n):
            if labels[i] == labels[j]:
                entries[(i, j)] = rng.uniform(*intra) * delta
            elif rng.random() >= excluded_rate:
                entries[(i, j)] = rng.uniform(*inter) * delta
    return matrix_of(entries, n)


def trajectory(camera_id, local_id, first, feature, zone_pair=1):
    return Trajectory(
        camera_id=camera_id,
        local_id=local_id,
        detections=tuple(
            Detection(camera_id, f, 0, (0.0, 0.0, 10.0, 10.0))
            for f in range(first, first + 11)
        ),
        fused_feature=np.asarray(feature, dtype=float),
        zone_pair=zone_pair,
    )


class DistanceMatrixTestCase(unittest.TestCase):
    """Constrained distances between trajectories."""

    def setUp(self):
        self.model = CameraLinkModel(
            {},
            {1: [ZonePair(1, 1, 1, 2)], 2: [ZonePair(2, 1, 1, 2)]},
            [CameraLink(1, 1, 2, 2, 1, 1, 30, 70, 10)],
        )
        self.trajectories = [
            trajectory(2, 2, 400, (0.0, 1.0)),
            trajectory(1, 1, 0, (1.0, 0.0)),
            trajectory(1, 2, 0, (0.0, 1.0)),
            trajectory(2, 1, 60, (1.0, 0.0)),
        ]

    def test_link_constraints(self):
        matrix = build_distance_matrix(self.trajectories, self.model)
        self.assertEqual(((1, 1), (1, 2), (2, 1), (2, 2)), matrix.keys)
        self.assertEqual(0.0, matrix.values[0, 2])
        self.assertAlmostEqual(math.sqrt(2.0), matrix.values[1, 2])
        # Same camera, and outside every window.
        self.assertEqual(EXCLUDED, matrix.values[0, 1])
        self.assertEqual(EXCLUDED, matrix.values[0, 3])
        self.assertEqual(EXCLUDED, matrix.values[2, 2])
        self.assertEqual(
            LinkedPair(0, 2, Transition(0, 10, 60)), matrix.links[(0, 2)]
        )
        self.assertEqual(
            {
                "trajectories": 4,
                "cross_camera_pairs": 4,
                "valid_pairs": 2,
                "pruned_fraction": 0.5,
            },
            matrix.pruning_stats(),
        )

    def test_without_model(self):
        matrix = build_distance_matrix(self.trajectories)
        self.assertEqual(4, matrix.valid_pairs)
        self.assertEqual({}, dict(matrix.links))
        self.assertEqual(0.0, matrix.pruning_stats()["pruned_fraction"])

    def test_missing_feature(self):
        bare = Trajectory(3, 1, self.trajectories[0].detections)
        with self.assertRaises(ValidationError):
            build_distance_matrix(self.trajectories + [bare])

    def test_invalid_matrix(self):
        with self.assertRaises(ValidationError):
            DistanceMatrix(
                ((1, 1), (2, 1)), np.array([[EXCLUDED, 0.1], [0.2, EXCLUDED]])
            )
        with self.assertRaises(ValidationError):
            DistanceMatrix(((1, 1),), np.zeros((2, 2)))


class HierarchicalClusterTestCase(unittest.TestCase):
    """Greedy assignment of global identities."""

    def setUp(self):
        # Two vehicles leave camera 1 at frames 10 and 20; camera 2 sees arrivals
        # at frames 60 and 80.
        self.keys = ((1, 1), (1, 2), (2, 1), (2, 2))
        self.spans = ((0, 10), (5, 20), (60, 70), (80, 90))
        self.links = {
            (0, 2): LinkedPair(0, 2, Transition(0, 10, 60)),
            (0, 3): LinkedPair(0, 3, Transition(0, 10, 80)),
            (1, 2): LinkedPair(1, 2, Transition(0, 20, 60)),
            (1, 3): LinkedPair(1, 3, Transition(0, 20, 80)),
        }

    def test_two_trajectories(self):
        assignment = hierarchical_cluster(matrix_of({(0, 1): 0.1}, 2), 0.5, 2)
        self.assertEqual({(1, 1): 1, (2, 1): 1}, dict(assignment.global_ids))
        self.assertEqual(
            (MatchedPair((1, 1), (2, 1), 0.1),), assignment.matched_pairs
        )

    def test_above_threshold(self):
        matrix = matrix_of({(0, 1): 0.5, (1, 2): 0.9, (0, 2): 0.7}, 3)
        assignment = hierarchical_cluster(matrix, 0.5, 2)
        self.assertEqual([1, 2, 3], sorted(assignment.global_ids.values()))
        self.assertEqual((), assignment.matched_pairs)

    def test_crossing_match_rejected(self):
        distances = {(0, 3): 0.1, (1, 2): 0.2, (0, 2): 0.3, (1, 3): 0.4}
        matrix = matrix_of(distances, 4, self.keys, self.spans, self.links)
        assignment = hierarchical_cluster(matrix, 0.5, 2)
        self.assertEqual(
            [((1, 1), (2, 2)), ((1, 2),), ((2, 1),)], assignment.clusters()
        )
        self.assertEqual({0: 1}, assignment.link_match_counts())

        # Without the link the crossing match goes through.
        matrix = matrix_of(distances, 4, self.keys, self.spans)
        assignment = hierarchical_cluster(matrix, 0.5, 2)
        self.assertEqual(
            [((1, 1), (2, 2)), ((1, 2), (2, 1))], assignment.clusters()
        )

    def test_order_kept(self):
        distances = {(0, 2): 0.1, (1, 3): 0.2, (0, 3): 0.3, (1, 2): 0.4}
        matrix = matrix_of(distances, 4, self.keys, self.spans, self.links)
        assignment = hierarchical_cluster(matrix, 0.5, 1)
        self.assertEqual(
            [((1, 1), (2, 1)), ((1, 2), (2, 2))], assignment.clusters()
        )
        self.assertEqual({0: 2}, assignment.link_match_counts())
        self.assertEqual(
            MatchedPair((1, 2), (2, 2), 0.2, 0), assignment.matched_pairs[1]
        )

    def test_same_camera_overlap(self):
        keys = ((1, 1), (1, 2), (2, 1))
        distances = {(0, 2): 0.1, (1, 2): 0.2}
        overlapping = matrix_of(distances, 3, keys, ((0, 10), (5, 15), (40, 50)))
        self.assertEqual(
            [((1, 1), (2, 1)), ((1, 2),)],
            hierarchical_cluster(overlapping, 0.5, 2).clusters(),
        )
        sequential = matrix_of(distances, 3, keys, ((0, 10), (20, 30), (40, 50)))
        self.assertEqual(
            [((1, 1), (1, 2), (2, 1))],
            hierarchical_cluster(sequential, 0.5, 2).clusters(),
        )
        unknown_spans = matrix_of(distances, 3, keys)
        self.assertEqual(2, len(hierarchical_cluster(unknown_spans, 0.5, 2).clusters()))

    def test_invalid_parameters(self):
        matrix = matrix_of({}, 2)
        with self.assertRaises(ValidationError):
            hierarchical_cluster(matrix, 0.0, 1)
        with self.assertRaises(ValidationError):
            hierarchical_cluster(matrix, 0.5, 0)


class BruteForceTestCase(unittest.TestCase):
    """The exact solver and its agreement with the greedy one."""

    def test_all_excluded(self):
        matrix = matrix_of({}, 3)
        assignment = brute_force_bip(matrix, 0.5)
        self.assertEqual([1, 2, 3], sorted(assignment.global_ids.values()))
        self.assertEqual(0.0, bip_objective(assignment, matrix, 0.5))

    def test_positive_pair(self):
        assignment = brute_force_bip(matrix_of({(0, 1): 0.1}, 2), 0.5)
        self.assertEqual(1, len(assignment.clusters()))

    def test_three_trajectories(self):
        matrix = matrix_of({(0, 1): 0.7, (1, 2): 0.7, (0, 2): 1.5}, 3)
        assignment = brute_force_bip(matrix, 1.0)
        self.assertEqual([((1, 1), (2, 1)), ((3, 1),)], assignment.clusters())
        self.assertAlmostEqual(0.3, bip_objective(assignment, matrix, 1.0))

        together = GlobalAssignment({(1, 1): 1, (2, 1): 1, (3, 1): 1})
        self.assertAlmostEqual(0.1, bip_objective(together, matrix, 1.0))
        excluded = matrix_of({(0, 1): 0.7, (1, 2): 0.7}, 3)
        self.assertEqual(-math.inf, bip_objective(together, excluded, 1.0))

    def test_size_limit(self):
        with self.assertRaises(SizeError):
            brute_force_bip(matrix_of({}, 11), 0.5)
        self.assertEqual({}, dict(brute_force_bip(matrix_of({}, 0), 0.5).global_ids))

    def test_agrees_on_separated_clusters(self):
        rng = np.random.default_rng(2024)
        delta = 0.6
        for _ in range(200):
            matrix = planted_instance(
                rng, delta, (0.0, 0.49), (2.01, 4.0), excluded_rate=0.3
            )
            self.assertEqual(
                dict(brute_force_bip(matrix, delta).global_ids),
                dict(hierarchical_cluster(matrix, delta, 2).global_ids),
            )

    def test_greedy_objective(self):
        rng = np.random.default_rng(7)
        delta = 0.6
        ratios = []
        for _ in range(100):
            matrix = planted_instance(rng, delta, (0.0, 0.95), (1.05, 3.0))
            optimum = bip_objective(brute_force_bip(matrix, delta), matrix, delta)
            greedy = bip_objective(
                hierarchical_cluster(matrix, delta, 2), matrix, delta
            )
            self.assertLessEqual(greedy, optimum + 1e-9)
            if optimum > 0:
                ratios.append(greedy / optimum)
        self.assertGreaterEqual(float(np.mean(ratios)), 0.9)

    def test_greedy_never_beats_optimum(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(2, 8))
            entries = {
                (i, j): rng.uniform(0.0, 1.2) for i in range(n) for j in range(i + 1, n)
            }
            matrix = matrix_of(entries, n)
            optimum = bip_objective(brute_force_bip(matrix, 0.6), matrix, 0.6)
            greedy = bip_objective(hierarchical_cluster(matrix, 0.6, 2), matrix, 0.6)
            self.assertLessEqual(greedy, optimum + 1e-9)


class GlobalTracksTestCase(unittest.TestCase):
    """Expanding an assignment into track rows."""

    def test_global_tracks(self):
        first = trajectory(1, 4, 0, (1.0,))
        assignment = GlobalAssignment({(1, 4): 7})
        rows = global_tracks([first], assignment)
        self.assertEqual(11, len(rows))
        self.assertEqual((1, 0, 7, (0.0, 0.0, 10.0, 10.0)), rows[0])
        with self.assertRaises(ValidationError):
            global_tracks([trajectory(2, 1, 0, (1.0,))], assignment)


if __name__ == "__main__":
    unittest.main()
