"""Single camera tracking.

Detections are first chained frame to frame into tracklets, using box overlap
and appearance. Tracklets are then linked into trajectories by greedy
agglomeration over a closed-form edge cost that combines appearance, time gap
and constant-velocity motion agreement.
"""

import math
from dataclasses import dataclass, field
from itertools import groupby
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from mtmct_tracker.config import PipelineConfig
from mtmct_tracker.errors import CoverageError, ValidationError
from mtmct_tracker.geometry import Box, Point, box_center, cosine_similarity, iou
from mtmct_tracker.ingest import Detection, EmbeddingTable

TrajectoryKey = Tuple[int, int]

INCOMPATIBLE = math.inf
# Trailing detections used to estimate a tracklet's velocity.
VELOCITY_WINDOW = 10
REJOIN_MIN_IOU = 0.5


@dataclass(frozen=True)
class Tracklet:
    """A short run of detections of one object in one camera."""

    camera_id: int
    detections: Tuple[Detection, ...]
    mean_embedding: np.ndarray = field(compare=False)

    @property
    def first_frame(self) -> int:
        return self.detections[0].frame

    @property
    def last_frame(self) -> int:
        return self.detections[-1].frame


@dataclass(frozen=True)
class ZoneVisit:
    """How strongly and when a trajectory passed through one zone."""

    zone_id: int
    alpha: float
    first_frame: int
    last_frame: int


@dataclass(frozen=True)
class Trajectory:
    """A complete track of one local identity in one camera."""

    camera_id: int
    local_id: int
    detections: Tuple[Detection, ...]
    fused_feature: Optional[np.ndarray] = field(default=None, compare=False)
    zone_pair: Optional[int] = None
    zone_visits: Tuple[ZoneVisit, ...] = ()

    def __post_init__(self) -> None:
        if not self.detections:
            raise ValidationError(f"trajectory {self.key} has no detections")
        frames = [d.frame for d in self.detections]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValidationError(f"frames of trajectory {self.key} do not increase")

    @property
    def key(self) -> TrajectoryKey:
        """The ``(camera_id, local_id)`` key."""
        return (self.camera_id, self.local_id)

    @property
    def first_frame(self) -> int:
        return self.detections[0].frame

    @property
    def last_frame(self) -> int:
        return self.detections[-1].frame

    @property
    def first_box(self) -> Box:
        return self.detections[0].box

    @property
    def last_box(self) -> Box:
        return self.detections[-1].box

    @property
    def entry_point(self) -> Point:
        """Centre of the first box."""
        return box_center(self.first_box)

    @property
    def exit_point(self) -> Point:
        """Centre of the last box."""
        return box_center(self.last_box)

    def visit(self, zone_id: int) -> Optional[ZoneVisit]:
        """Return the visit of zone_id, None if the trajectory never touched it."""
        for zone_visit in self.zone_visits:
            if zone_visit.zone_id == zone_id:
                return zone_visit
        return None


class _OpenTracklet:
    """A tracklet still accepting detections."""

    def __init__(self, detection: Detection, embedding: np.ndarray) -> None:
        self.detections = [detection]
        self.embedding_sum = np.array(embedding, dtype=float)

    @property
    def last(self) -> Detection:
        return self.detections[-1]

    @property
    def mean_embedding(self) -> np.ndarray:
        return self.embedding_sum / len(self.detections)

    def add(self, detection: Detection, embedding: np.ndarray) -> None:
        self.detections.append(detection)
        self.embedding_sum += embedding

    def close(self) -> Tracklet:
        return Tracklet(
            camera_id=self.detections[0].camera_id,
            detections=tuple(self.detections),
            mean_embedding=self.mean_embedding,
        )


def associate_detections(
    detections: Sequence[Detection],
    embeddings: EmbeddingTable,
    config: PipelineConfig,
) -> List[Tracklet]:
    """Chain one camera's detections into tracklets.

    In every frame, open tracklets and new detections are matched greedily in
    descending order of ``0.5 * iou + 0.5 * cosine similarity``, where the IOU
    is taken against the tracklet's last box and the similarity against its
    mean embedding. Pairs whose IOU is below ``config.iou_assoc_threshold``
    are never matched. Unmatched detections start new tracklets and a tracklet
    missing for more than ``config.gap_frames`` frames is closed.

    Args:
        detections: Detections of a single camera.
        embeddings: Embeddings covering every detection.
        config: The pipeline configuration.

    Raises:
        CoverageError: If a detection has no embedding.

    Returns:
        The tracklets, ordered by first frame and first detection index.
    """
    open_tracklets: List[_OpenTracklet] = []
    closed: List[_OpenTracklet] = []
    ordered = sorted(detections, key=lambda d: (d.frame, d.det_index))
    for frame, group in groupby(ordered, key=lambda d: d.frame):
        frame_detections = list(group)
        vectors = [embeddings.vector(d.key) for d in frame_detections]

        still_open = []
        for tracklet in open_tracklets:
            if frame - tracklet.last.frame - 1 > config.gap_frames:
                closed.append(tracklet)
            else:
                still_open.append(tracklet)
        open_tracklets = still_open

        candidates = []
        for t_index, tracklet in enumerate(open_tracklets):
            mean = tracklet.mean_embedding
            for d_index, detection in enumerate(frame_detections):
                overlap = iou(tracklet.last.box, detection.box)
                if overlap < config.iou_assoc_threshold:
                    continue
                score = 0.5 * overlap + 0.5 * cosine_similarity(mean, vectors[d_index])
                candidates.append((-score, t_index, d_index))
        candidates.sort()

        used_tracklets = set()
        used_detections = set()
        for _, t_index, d_index in candidates:
            if t_index in used_tracklets or d_index in used_detections:
                continue
            used_tracklets.add(t_index)
            used_detections.add(d_index)
            open_tracklets[t_index].add(frame_detections[d_index], vectors[d_index])

        for d_index, detection in enumerate(frame_detections):
            if d_index not in used_detections:
                open_tracklets.append(_OpenTracklet(detection, vectors[d_index]))

    tracklets = [t.close() for t in closed + open_tracklets]
    tracklets.sort(key=lambda t: (t.first_frame, t.detections[0].det_index))
    return tracklets


def extrapolate_box(detections: Sequence[Detection], frame: int) -> Box:
    """Predict the box at frame under constant velocity.

    The velocity is the centre displacement over the trailing
    ``VELOCITY_WINDOW`` detections; a single detection does not move.

    Args:
        detections: Frame ordered detections of one object.
        frame: The frame to predict.

    Returns:
        The last box moved to its predicted centre.
    """
    last = detections[-1]
    anchor = detections[max(0, len(detections) - VELOCITY_WINDOW)]
    x_last, y_last = box_center(last.box)
    x_anchor, y_anchor = box_center(anchor.box)
    span = last.frame - anchor.frame
    vx, vy = 0.0, 0.0
    if span > 0:
        vx, vy = (x_last - x_anchor) / span, (y_last - y_anchor) / span
    dt = frame - last.frame
    _, _, w, h = last.box
    return (x_last + vx * dt - w / 2.0, y_last + vy * dt - h / 2.0, w, h)


def tracklet_edge_cost(t1: Tracklet, t2: Tracklet, config: PipelineConfig) -> float:
    """Cost of linking tracklet t2 after tracklet t1.

    The gap is the number of frames missing between t1's last and t2's first
    detection. The cost is
    ``w_a * (1 - cos(mean embeddings)) + w_t * gap / gap_max
    + w_m * (1 - iou(t1 extrapolated to t2's first frame, t2's first box))``.

    Args:
        t1: The earlier tracklet.
        t2: The later tracklet of the same camera.
        config: Supplies ``edge_weights`` and ``gap_max``.

    Returns:
        The cost, or ``INCOMPATIBLE`` if the tracklets overlap in time or the
        gap exceeds ``gap_max``.
    """
    if t2.first_frame <= t1.last_frame:
        return INCOMPATIBLE
    gap = t2.first_frame - t1.last_frame - 1
    if gap > config.gap_max:
        return INCOMPATIBLE
    w_appearance, w_time, w_motion = config.edge_weights
    similarity = cosine_similarity(t1.mean_embedding, t2.mean_embedding)
    predicted = extrapolate_box(t1.detections, t2.first_frame)
    motion = iou(predicted, t2.detections[0].box)
    return (
        w_appearance * (1.0 - similarity)
        + w_time * gap / config.gap_max
        + w_motion * (1.0 - motion)
    )


def cluster_tracklets(
    tracklets: Sequence[Tracklet], config: PipelineConfig
) -> List[Trajectory]:
    """Link one camera's tracklets into trajectories.

    Edges are visited in ascending cost (ties by tracklet order) while the cost
    is below ``config.merge_threshold``. An edge merges two groups when it joins
    the last tracklet of the earlier group to the first tracklet of the later
    one, so every group stays a time ordered chain.

    Args:
        tracklets: Tracklets of a single camera.
        config: The pipeline configuration.

    Returns:
        Trajectories with local ids 1, 2, ... in order of first frame and first
        detection index.
    """
    ordered = sorted(
        tracklets, key=lambda t: (t.first_frame, t.detections[0].det_index)
    )
    edges = []
    for i, earlier in enumerate(ordered):
        for j, later in enumerate(ordered):
            if i == j or later.first_frame <= earlier.last_frame:
                continue
            cost = tracklet_edge_cost(earlier, later, config)
            if cost < config.merge_threshold:
                edges.append((cost, i, j))
    edges.sort()

    chains: Dict[int, List[int]] = {i: [i] for i in range(len(ordered))}
    chain_of = list(range(len(ordered)))
    for cost, i, j in edges:
        head, tail = chain_of[i], chain_of[j]
        if head == tail or chains[head][-1] != i or chains[tail][0] != j:
            continue
        logger.trace("linking tracklets {} -> {} at cost {:.4f}", i, j, cost)
        chains[head].extend(chains.pop(tail))
        for member in chains[head]:
            chain_of[member] = head

    groups = [
        tuple(d for member in chain for d in ordered[member].detections)
        for chain in chains.values()
    ]
    groups.sort(key=lambda g: (g[0].frame, g[0].det_index))
    return [
        Trajectory(camera_id=group[0].camera_id, local_id=local_id, detections=group)
        for local_id, group in enumerate(groups, start=1)
    ]


def run_sct(
    detections: Sequence[Detection],
    embeddings: EmbeddingTable,
    config: PipelineConfig,
) -> List[Trajectory]:
    """Associate detections into tracklets, then cluster them into trajectories."""
    tracklets = associate_detections(detections, embeddings, config)
    trajectories = cluster_tracklets(tracklets, config)
    logger.debug(
        "{} detections -> {} tracklets -> {} trajectories",
        len(detections),
        len(tracklets),
        len(trajectories),
    )
    return trajectories


def trajectory_embedding(
    trajectory: Trajectory, embeddings: EmbeddingTable
) -> np.ndarray:
    """Return the mean embedding of a trajectory's detections."""
    return embeddings.stack([d.key for d in trajectory.detections]).mean(axis=0)


def trajectories_from_tracks(
    camera_id: int, tracks: Mapping[int, Sequence[Detection]]
) -> List[Trajectory]:
    """Build trajectories straight from a parsed track file.

    Args:
        camera_id: The camera of the tracks.
        tracks: Identity mapped to frame ordered detections.

    Returns:
        One trajectory per identity, the identity becoming the local id.
    """
    return [
        Trajectory(
            camera_id=camera_id,
            local_id=identity,
            detections=tuple(tracks[identity]),
        )
        for identity in sorted(tracks)
    ]


def rejoin_detections(
    camera_id: int,
    tracks: Mapping[int, Sequence[Detection]],
    detections: Sequence[Detection],
) -> List[Trajectory]:
    """Map the rows of an external tracker's output back onto raw detections.

    Every track row is replaced by the raw detection of the same frame that
    overlaps it most, so embeddings and metadata stay reachable by key.

    Args:
        camera_id: The camera of the tracks.
        tracks: Identity mapped to frame ordered track rows.
        detections: The raw detections of the camera.

    Raises:
        CoverageError: If a row matches no raw detection with IOU of at least
            ``REJOIN_MIN_IOU``.
        ValidationError: If two rows claim the same raw detection.

    Returns:
        One trajectory per identity, made of raw detections.
    """
    by_frame: Dict[int, List[Detection]] = {}
    for detection in detections:
        by_frame.setdefault(detection.frame, []).append(detection)
    claimed: Dict[Tuple[int, int, int], int] = {}
    trajectories = []
    for identity in sorted(tracks):
        matched = []
        for row in tracks[identity]:
            scored = [
                (iou(row.box, d.box), -d.det_index, d)
                for d in by_frame.get(row.frame, [])
            ]
            best = max(scored, key=lambda s: (s[0], s[1]), default=None)
            if best is None or best[0] < REJOIN_MIN_IOU:
                raise CoverageError(
                    f"track {identity} of camera {camera_id} at frame {row.frame} "
                    "matches no detection"
                )
            detection = best[2]
            if detection.key in claimed:
                raise ValidationError(
                    f"tracks {claimed[detection.key]} and {identity} share "
                    f"detection {detection.key}"
                )
            claimed[detection.key] = identity
            matched.append(detection)
        trajectories.append(
            Trajectory(
                camera_id=camera_id, local_id=identity, detections=tuple(matched)
            )
        )
    return trajectories


def trajectory_rows(
    trajectories: Iterable[Trajectory],
    identities: Optional[Mapping[TrajectoryKey, int]] = None,
) -> List[Tuple[int, int, int, Box]]:
    """Flatten trajectories into ``(camera_id, frame, id, box)`` rows.

    Args:
        trajectories: The trajectories to flatten.
        identities: Maps trajectory keys to the id to write. Defaults to the
            local id.

    Returns:
        The rows, unsorted.
    """
    rows = []
    for trajectory in trajectories:
        identity = (
            trajectory.local_id if identities is None else identities[trajectory.key]
        )
        rows.extend(
            (trajectory.camera_id, d.frame, identity, d.box)
            for d in trajectory.detections
        )
    return rows
