"""Cross-camera identity assignment.

Trajectories from different cameras are compared through their fused features.
Pairs that no camera link allows are excluded up front. Global identities then
come from a greedy hierarchical clustering over the remaining distances, which
keeps vehicles in order along each link and never merges two trajectories of
one camera that overlap in time. A brute-force solver of the underlying
correlation clustering problem serves as an exact reference on small inputs.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from mtmct_tracker.clm import (
    CameraLinkModel,
    Transition,
    transition_frames,
    transitions_consistent,
)
from mtmct_tracker.constants import MAX_BIP_SIZE
from mtmct_tracker.errors import SizeError, ValidationError
from mtmct_tracker.geometry import Box
from mtmct_tracker.reid_fusion import pair_distance
from mtmct_tracker.sct import Trajectory, TrajectoryKey
from mtmct_tracker.utils import validate_count, validate_positive

# pylint: disable=too-many-locals

EXCLUDED = math.inf
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class LinkedPair:
    """A matrix entry that travels on a camera link, source row first."""

    source: int
    dest: int
    transition: Transition


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric distances between trajectories, EXCLUDED where not allowed.

    ``spans`` holds the inclusive ``(first_frame, last_frame)`` of every row
    when known. ``links`` holds, for ``(i, j)`` with ``i < j``, the link entry
    ``(i, j)`` travels on; entries allowed without a link model have none.
    """

    keys: Tuple[TrajectoryKey, ...]
    values: np.ndarray
    spans: Tuple[Tuple[int, int], ...] = ()
    links: Mapping[Tuple[int, int], LinkedPair] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.keys)
        if self.values.shape != (n, n):
            raise ValidationError(
                f"distance matrix of shape {self.values.shape} for {n} trajectories"
            )
        if not np.array_equal(self.values, self.values.T):
            raise ValidationError("distance matrix is not symmetric")
        if self.spans and len(self.spans) != n:
            raise ValidationError(f"{len(self.spans)} spans for {n} trajectories")

    @property
    def size(self) -> int:
        return len(self.keys)

    def camera(self, row: int) -> int:
        return self.keys[row][0]

    def finite_entries(self) -> List[Tuple[float, int, int]]:
        """Return ``(distance, i, j)`` for every allowed entry with ``i < j``."""
        rows, cols = np.triu_indices(self.size, k=1)
        return [
            (float(self.values[i, j]), int(i), int(j))
            for i, j in zip(rows, cols)
            if math.isfinite(self.values[i, j])
        ]

    @property
    def cross_camera_pairs(self) -> int:
        """The number of trajectory pairs from different cameras."""
        cameras = [key[0] for key in self.keys]
        counts: Dict[int, int] = {}
        for camera_id in cameras:
            counts[camera_id] = counts.get(camera_id, 0) + 1
        same_camera = sum(c * (c - 1) // 2 for c in counts.values())
        return self.size * (self.size - 1) // 2 - same_camera

    @property
    def valid_pairs(self) -> int:
        """The number of allowed trajectory pairs."""
        return len(self.finite_entries())

    def pruning_stats(self) -> Dict[str, float]:
        """Summarise how many candidate pairs the link constraints removed."""
        cross = self.cross_camera_pairs
        valid = self.valid_pairs
        return {
            "trajectories": self.size,
            "cross_camera_pairs": cross,
            "valid_pairs": valid,
            "pruned_fraction": 0.0 if cross == 0 else 1.0 - valid / cross,
        }


@dataclass(frozen=True)
class MatchedPair:
    """Two trajectories joined directly by the clustering."""

    source: TrajectoryKey
    dest: TrajectoryKey
    distance: float
    link_index: Optional[int] = None


@dataclass(frozen=True)
class GlobalAssignment:
    """Global identity of every trajectory and the matches that produced them."""

    global_ids: Mapping[TrajectoryKey, int]
    matched_pairs: Tuple[MatchedPair, ...] = ()

    def clusters(self) -> List[Tuple[TrajectoryKey, ...]]:
        """Return the trajectories of every identity, ordered by identity."""
        members: Dict[int, List[TrajectoryKey]] = {}
        for key, global_id in self.global_ids.items():
            members.setdefault(global_id, []).append(key)
        return [tuple(sorted(members[g])) for g in sorted(members)]

    def link_match_counts(self) -> Dict[Optional[int], int]:
        """Count the direct matches made on every link."""
        counts: Dict[Optional[int], int] = {}
        for pair in self.matched_pairs:
            counts[pair.link_index] = counts.get(pair.link_index, 0) + 1
        return counts


def build_distance_matrix(
    trajectories: Sequence[Trajectory], model: Optional[CameraLinkModel] = None
) -> DistanceMatrix:
    """Compute the constrained distances between trajectories.

    Pairs from the same camera are excluded. With a link model, a cross-camera
    pair is kept only when one trajectory can follow the other on a link within
    its transition-time window; without one every cross-camera pair is kept.

    Args:
        trajectories: Trajectories of all cameras, with fused features and,
            when a model is given, zone pairs.
        model: The camera link model, if any.

    Raises:
        ValidationError: If a trajectory has no fused feature.

    Returns:
        The matrix, rows in ``(camera_id, local_id)`` order.
    """
    ordered = sorted(trajectories, key=lambda t: t.key)
    for trajectory in ordered:
        if trajectory.fused_feature is None:
            raise ValidationError(f"trajectory {trajectory.key} has no fused feature")
    n = len(ordered)
    values = np.full((n, n), EXCLUDED)
    links: Dict[Tuple[int, int], LinkedPair] = {}
    for i in range(n):
        for j in range(i + 1, n):
            first, second = ordered[i], ordered[j]
            if first.camera_id == second.camera_id:
                continue
            if model is not None:
                linked = _linked_pair(i, j, first, second, model)
                if linked is None:
                    continue
                links[(i, j)] = linked
            distance = pair_distance(first.fused_feature, second.fused_feature)
            values[i, j] = values[j, i] = distance
    matrix = DistanceMatrix(
        keys=tuple(t.key for t in ordered),
        values=values,
        spans=tuple((t.first_frame, t.last_frame) for t in ordered),
        links=links,
    )
    logger.info(
        "{} of {} cross-camera pairs pass the link constraints",
        matrix.valid_pairs,
        matrix.cross_camera_pairs,
    )
    return matrix


def _linked_pair(
    i: int, j: int, first: Trajectory, second: Trajectory, model: CameraLinkModel
) -> Optional[LinkedPair]:
    """The link entry (i, j) travels on within its window, either direction."""
    for source, dest, source_row, dest_row in (
        (first, second, i, j),
        (second, first, j, i),
    ):
        transition = transition_frames(source, dest, model)
        if transition is not None and model.links[transition.link_index].contains(
            transition.delta
        ):
            return LinkedPair(source=source_row, dest=dest_row, transition=transition)
    return None


class _Clusters:
    """Union-find over matrix rows that also tracks cluster members."""

    def __init__(self, size: int) -> None:
        self.parent = list(range(size))
        self.members: Dict[int, List[int]] = {i: [i] for i in range(size)}

    def find(self, row: int) -> int:
        while self.parent[row] != row:
            self.parent[row] = self.parent[self.parent[row]]
            row = self.parent[row]
        return row

    def union(self, row_a: int, row_b: int) -> None:
        root_a, root_b = self.find(row_a), self.find(row_b)
        if root_a == root_b:
            return
        keep, drop = min(root_a, root_b), max(root_a, root_b)
        self.parent[drop] = keep
        self.members[keep].extend(self.members.pop(drop))

    def partition(self) -> List[List[int]]:
        return sorted(sorted(rows) for rows in self.members.values())


def _spans_overlap(span_a: Tuple[int, int], span_b: Tuple[int, int]) -> bool:
    return span_a[0] <= span_b[1] and span_b[0] <= span_a[1]


def _camera_conflict(
    matrix: DistanceMatrix, rows_a: List[int], rows_b: List[int]
) -> bool:
    """Whether joining two clusters puts overlapping same-camera rows together."""
    for a in rows_a:
        for b in rows_b:
            if matrix.camera(a) != matrix.camera(b):
                continue
            if not matrix.spans or _spans_overlap(matrix.spans[a], matrix.spans[b]):
                return True
    return False


def _assignment(
    matrix: DistanceMatrix,
    partition: Iterable[Sequence[int]],
    matched: Sequence[MatchedPair],
) -> GlobalAssignment:
    global_ids: Dict[TrajectoryKey, int] = {}
    for global_id, rows in enumerate(sorted(sorted(p) for p in partition), start=1):
        for row in rows:
            global_ids[matrix.keys[row]] = global_id
    return GlobalAssignment(global_ids=global_ids, matched_pairs=tuple(matched))


def hierarchical_cluster(
    matrix: DistanceMatrix, delta: float, iterations: int
) -> GlobalAssignment:
    """Assign global identities by greedy agglomeration.

    The allowed entries are scanned in ascending order of distance, ties by
    ``(i, j)``. An entry below ``delta`` joins the clusters of its two
    trajectories unless that would reverse the order of two vehicles on the
    entry's link, judged against the pairs already joined on that link, or
    would put two trajectories of one camera with overlapping time spans into
    one cluster. Rejected entries are excluded for the remaining passes.

    Args:
        matrix: The constrained distance matrix. It is not modified.
        delta: The distance threshold.
        iterations: The number of passes over the sorted entries.

    Raises:
        ValidationError: If delta is not positive or iterations is below 1.

    Returns:
        The assignment. Global ids start at 1 and follow the smallest row of
        every cluster.
    """
    validate_positive(delta, "delta")
    validate_count(iterations, "iterations")
    entries = sorted(matrix.finite_entries())
    excluded = set()
    clusters = _Clusters(matrix.size)
    accepted: Dict[int, List[Transition]] = {}
    matched: List[MatchedPair] = []
    for _ in range(iterations):
        for distance, i, j in entries:
            if (i, j) in excluded:
                continue
            root_i, root_j = clusters.find(i), clusters.find(j)
            if root_i == root_j:
                continue
            linked = matrix.links.get((i, j))
            if distance >= delta:
                excluded.add((i, j))
                continue
            if linked is not None and not all(
                transitions_consistent(linked.transition, other)
                for other in accepted.get(linked.transition.link_index, [])
            ):
                logger.debug("rejected {} - {}: order", matrix.keys[i], matrix.keys[j])
                excluded.add((i, j))
                continue
            members_i, members_j = clusters.members[root_i], clusters.members[root_j]
            if _camera_conflict(matrix, members_i, members_j):
                logger.debug(
                    "rejected {} - {}: same camera", matrix.keys[i], matrix.keys[j]
                )
                excluded.add((i, j))
                continue
            clusters.union(i, j)
            if linked is None:
                matched.append(MatchedPair(matrix.keys[i], matrix.keys[j], distance))
            else:
                accepted.setdefault(linked.transition.link_index, []).append(
                    linked.transition
                )
                matched.append(
                    MatchedPair(
                        matrix.keys[linked.source],
                        matrix.keys[linked.dest],
                        distance,
                        linked.transition.link_index,
                    )
                )
    assignment = _assignment(matrix, clusters.partition(), matched)
    logger.info(
        "{} trajectories grouped into {} identities",
        matrix.size,
        len(set(assignment.global_ids.values())),
    )
    return assignment


def bip_objective(
    assignment: GlobalAssignment, matrix: DistanceMatrix, delta: float
) -> float:
    """Score an assignment by the sum of ``delta - M[i, j]`` over co-clustered pairs.

    Returns:
        The objective, or minus infinity when an excluded pair shares a cluster.
    """
    index = {key: row for row, key in enumerate(matrix.keys)}
    total = 0.0
    for members in assignment.clusters():
        rows = sorted(index[key] for key in members)
        for position, a in enumerate(rows):
            for b in rows[position + 1 :]:
                if not math.isfinite(matrix.values[a, b]):
                    return -math.inf
                total += delta - float(matrix.values[a, b])
    return total


def brute_force_bip(matrix: DistanceMatrix, delta: float) -> GlobalAssignment:
    """Solve the clustering problem exactly by enumerating set partitions.

    The best partition maximises the sum of ``delta - M[i, j]`` over pairs that
    share a cluster, with excluded pairs never sharing one. Partitions are
    enumerated as restricted growth strings in lexicographic order, so ties go
    to the lexicographically smallest string.

    Raises:
        SizeError: If the matrix has more than ``MAX_BIP_SIZE`` rows.
        ValidationError: If delta is not positive.

    Returns:
        The optimal assignment.
    """
    validate_positive(delta, "delta")
    n = matrix.size
    if n > MAX_BIP_SIZE:
        raise SizeError(
            f"brute force is limited to {MAX_BIP_SIZE} trajectories, got {n}"
        )
    weights = delta - matrix.values
    allowed = np.isfinite(matrix.values)
    # Upper bound on what rows k.. can still add.
    gains = [float(np.clip(weights[k, :k], 0.0, None).sum()) for k in range(n)]
    remaining = [sum(gains[k:]) for k in range(n + 1)]

    best_score = -math.inf
    best_blocks: List[List[int]] = [[row] for row in range(n)]
    blocks: List[List[int]] = []

    def extend(row: int, score: float) -> None:
        nonlocal best_score, best_blocks
        if row == n:
            if score > best_score + TIE_TOLERANCE:
                best_score = score
                best_blocks = [list(block) for block in blocks]
            return
        if score + remaining[row] <= best_score + TIE_TOLERANCE:
            return
        for block in blocks:
            if all(allowed[row, other] for other in block):
                block.append(row)
                gain = float(sum(weights[row, other] for other in block[:-1]))
                extend(row + 1, score + gain)
                block.pop()
        blocks.append([row])
        extend(row + 1, score)
        blocks.pop()

    if n:
        extend(0, 0.0)
    return _assignment(matrix, best_blocks, ())


def global_tracks(
    trajectories: Iterable[Trajectory], assignment: GlobalAssignment
) -> List[Tuple[int, int, int, Box]]:
    """Expand an assignment into ``(camera_id, frame, global_id, box)`` rows.

    Raises:
        ValidationError: If a trajectory has no global id.
    """
    rows = []
    for trajectory in trajectories:
        try:
            global_id = assignment.global_ids[trajectory.key]
        except KeyError as exc:
            raise ValidationError(
                f"trajectory {trajectory.key} has no global id"
            ) from exc
        rows.extend(
            (trajectory.camera_id, d.frame, global_id, d.box)
            for d in trajectory.detections
        )
    return rows
