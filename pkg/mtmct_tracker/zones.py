"""Entry, exit and traffic-aware zones.

Zones are found by running MeanShift over the entry and exit points of a
camera's trajectories. Each surviving cluster becomes a zone whose class
follows from the share of entry and exit points it holds. Traffic-aware zones,
where vehicles wait and tracks break, are then used to reconnect isolated
trajectories first in, first out.
"""

from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Deque, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from mtmct_tracker.config import PipelineConfig
from mtmct_tracker.constants import MEAN_SHIFT_MAX_ITER, MEAN_SHIFT_TOLERANCE
from mtmct_tracker.errors import ParseError, ValidationError
from mtmct_tracker.geometry import (
    Box,
    Point,
    box_center,
    bounding_box,
    cosine_similarity,
    iou,
    overlap_ratio,
)
from mtmct_tracker.ingest import EmbeddingTable, _read_rows, _write_rows
from mtmct_tracker.sct import Trajectory, TrajectoryKey, trajectory_embedding
from mtmct_tracker.utils import format_number, validate_positive

# pylint: disable=too-many-locals


class ZoneClass(str, Enum):
    """The role a zone plays in the traffic through a camera."""

    ENTRY = "entry"
    EXIT = "exit"
    TRAFFIC_AWARE = "traffic_aware"
    DONT_CARE = "dont_care"


class EndpointKind(str, Enum):
    """Whether an endpoint starts or ends a trajectory."""

    ENTRY = "entry"
    EXIT = "exit"


@dataclass(frozen=True)
class EndpointSample:
    """The first or last point of one trajectory."""

    point: Point
    kind: EndpointKind
    trajectory_ref: TrajectoryKey
    box: Box


@dataclass(frozen=True)
class Zone:
    """An axis-aligned image region and the endpoints that formed it."""

    camera_id: int
    zone_id: int
    bbox: Box
    n_entry: int
    n_exit: int
    zone_class: ZoneClass

    @property
    def densities(self) -> Tuple[float, float, float]:
        """The entry, exit and traffic-aware densities of the zone."""
        return zone_densities(self.n_entry, self.n_exit)


@dataclass(frozen=True)
class ZoneMerge:
    """One reconnection made in a traffic-aware zone."""

    camera_id: int
    zone_id: int
    exit_ref: TrajectoryKey
    entry_ref: TrajectoryKey
    exit_frame: int
    entry_frame: int


@dataclass(frozen=True)
class MeanShiftResult:
    """Surviving modes, the mode index of every point and the iterations run."""

    centroids: np.ndarray
    labels: np.ndarray
    iterations: int


def mean_shift(
    points: Sequence[Point],
    bandwidth: float,
    tol: float = MEAN_SHIFT_TOLERANCE,
    max_iter: int = MEAN_SHIFT_MAX_ITER,
) -> MeanShiftResult:
    """Cluster 2D points with MeanShift.

    Every point seeds a candidate centroid ``c`` that is moved to
    ``sum K(c_j - c) c_j / sum K(c_j - c)`` over the points ``c_j`` within
    distance ``bandwidth`` of ``c``, with ``K(d) = exp(-|d| / (2 bandwidth^2))``.
    Iteration stops once no centroid moves by ``tol`` or more, or after
    ``max_iter`` rounds. Converged modes closer than ``bandwidth / 2`` are
    merged, keeping the mode with the most points in its neighbourhood, and
    every point is labelled with its nearest surviving mode.

    Args:
        points: The points to cluster.
        bandwidth: The kernel bandwidth and neighbourhood radius.
        tol: Convergence tolerance in pixels.
        max_iter: Iteration cap.

    Raises:
        ValidationError: If a coordinate is not finite or bandwidth is not
            positive.

    Returns:
        The clustering. Empty input gives an empty result.
    """
    validate_positive(bandwidth, "bandwidth")
    samples = np.asarray(points, dtype=float).reshape(-1, 2)
    if samples.shape[0] == 0:
        return MeanShiftResult(np.zeros((0, 2)), np.zeros(0, dtype=int), 0)
    if not np.all(np.isfinite(samples)):
        raise ValidationError("mean_shift input contains non-finite coordinates")

    modes = samples.copy()
    iterations = 0
    while iterations < max_iter:
        iterations += 1
        distances = np.linalg.norm(modes[:, None, :] - samples[None, :, :], axis=2)
        weights = np.where(
            distances <= bandwidth, np.exp(-distances / (2.0 * bandwidth**2)), 0.0
        )
        totals = weights.sum(axis=1)
        has_neighbours = totals > 0
        shifted = modes.copy()
        shifted[has_neighbours] = (
            weights[has_neighbours] @ samples
        ) / totals[has_neighbours, None]
        displacement = float(np.linalg.norm(shifted - modes, axis=1).max())
        modes = shifted
        if displacement < tol:
            break

    support = (
        np.linalg.norm(modes[:, None, :] - samples[None, :, :], axis=2) <= bandwidth
    ).sum(axis=1)
    kept: List[int] = []
    for index in sorted(range(len(modes)), key=lambda i: (-support[i], i)):
        separation = [np.linalg.norm(modes[index] - modes[k]) for k in kept]
        if all(s >= bandwidth / 2.0 for s in separation):
            kept.append(index)
    centroids = modes[kept]
    labels = np.argmin(
        np.linalg.norm(samples[:, None, :] - centroids[None, :, :], axis=2), axis=1
    )
    return MeanShiftResult(centroids=centroids, labels=labels, iterations=iterations)


def zone_densities(n_entry: int, n_exit: int) -> Tuple[float, float, float]:
    """Return the entry, exit and traffic-aware densities of a zone.

    Raises:
        ValidationError: If both counts are zero.
    """
    total = n_entry + n_exit
    if total <= 0:
        raise ValidationError("a zone needs at least one entry or exit point")
    return n_entry / total, n_exit / total, 1.0 - abs(n_entry - n_exit) / total


def classify_zone(n_entry: int, n_exit: int, config: PipelineConfig) -> ZoneClass:
    """Classify a zone from its entry and exit point counts.

    The tests run in order: entry if the entry density exceeds ``rho_entry``,
    else exit if the exit density exceeds ``rho_exit``, else traffic-aware if
    the traffic-aware density exceeds ``rho_traffic_aware``, else don't care.

    Raises:
        ValidationError: If both counts are zero.
    """
    d_entry, d_exit, d_traffic = zone_densities(n_entry, n_exit)
    if d_entry > config.rho_entry:
        return ZoneClass.ENTRY
    if d_exit > config.rho_exit:
        return ZoneClass.EXIT
    if d_traffic > config.rho_traffic_aware:
        return ZoneClass.TRAFFIC_AWARE
    return ZoneClass.DONT_CARE


def endpoint_samples(trajectories: Sequence[Trajectory]) -> List[EndpointSample]:
    """Return the entry and exit point of every trajectory."""
    samples = []
    for trajectory in trajectories:
        samples.append(
            EndpointSample(
                trajectory.entry_point,
                EndpointKind.ENTRY,
                trajectory.key,
                trajectory.first_box,
            )
        )
        samples.append(
            EndpointSample(
                trajectory.exit_point,
                EndpointKind.EXIT,
                trajectory.key,
                trajectory.last_box,
            )
        )
    return samples


def _zone_box(members: Sequence[EndpointSample], min_area_ratio: float) -> Box:
    """Tight box around the members, grown to min_area_ratio mean box areas."""
    x, y, w, h = bounding_box([m.point for m in members])
    center_x, center_y = x + w / 2.0, y + h / 2.0
    widths = np.array([m.box[2] for m in members])
    heights = np.array([m.box[3] for m in members])
    target = min_area_ratio * float(np.mean(widths * heights))
    scale = float(np.sqrt(min_area_ratio))
    w = max(w, scale * float(widths.mean()))
    h = max(h, scale * float(heights.mean()))
    if w * h < target:
        grow = float(np.sqrt(target / (w * h)))
        w, h = w * grow, h * grow
    return (center_x - w / 2.0, center_y - h / 2.0, w, h)


def build_zones(
    trajectories: Sequence[Trajectory], config: PipelineConfig
) -> List[Zone]:
    """Infer the zones of one camera from its trajectories' endpoints.

    Args:
        trajectories: Trajectories of a single camera.
        config: Supplies the bandwidth, the minimum zone size and the density
            thresholds.

    Returns:
        The zones, numbered from 1 in order of their centre's x then y.
    """
    samples = endpoint_samples(trajectories)
    if not samples:
        return []
    clustering = mean_shift([s.point for s in samples], config.bandwidth)
    clusters = []
    for label in range(len(clustering.centroids)):
        members = [s for s, l in zip(samples, clustering.labels) if l == label]
        if len(members) < config.min_zone_points:
            logger.debug("dropping cluster of {} endpoints", len(members))
            continue
        clusters.append(members)

    boxes = [_zone_box(members, config.min_zone_area_ratio) for members in clusters]
    order = sorted(range(len(clusters)), key=lambda i: box_center(boxes[i]))
    camera_id = trajectories[0].camera_id
    zones = []
    for zone_id, index in enumerate(order, start=1):
        n_entry = sum(1 for m in clusters[index] if m.kind is EndpointKind.ENTRY)
        n_exit = len(clusters[index]) - n_entry
        zones.append(
            Zone(
                camera_id=camera_id,
                zone_id=zone_id,
                bbox=boxes[index],
                n_entry=n_entry,
                n_exit=n_exit,
                zone_class=classify_zone(n_entry, n_exit, config),
            )
        )
    logger.debug(
        "camera {}: {} zones ({})",
        camera_id,
        len(zones),
        ", ".join(z.zone_class.value for z in zones),
    )
    return zones


def reconnect_isolated(
    trajectories: Sequence[Trajectory],
    zones: Sequence[Zone],
    embeddings: EmbeddingTable,
    config: PipelineConfig,
    merge_log: Optional[List[ZoneMerge]] = None,
) -> List[Trajectory]:
    """Merge trajectories that break inside traffic-aware zones.

    Each traffic-aware zone keeps a queue of the trajectories that end in it,
    in order of their last frame. When a trajectory later starts in the zone,
    the queue head is merged into it if their boxes overlap with IOU of at least
    ``iou_reconnect_threshold`` and their mean embeddings have cosine
    similarity of at least ``appearance_reconnect_threshold``. A failing head
    stays queued; heads older than ``reconnect_ttl_frames`` are dropped. A merged
    trajectory keeps the local id of its earliest part.

    Args:
        trajectories: Trajectories of a single camera.
        zones: The zones of that camera.
        embeddings: Embeddings of the trajectories' detections.
        config: The pipeline configuration.
        merge_log: If given, every merge is appended to it.

    Returns:
        The trajectories after reconnection, ordered by local id.
    """
    traffic_zones = [z for z in zones if z.zone_class is ZoneClass.TRAFFIC_AWARE]
    if not trajectories or not traffic_zones:
        return sorted(trajectories, key=lambda t: t.local_id)

    by_key = {t.key: t for t in trajectories}
    means = {t.key: trajectory_embedding(t, embeddings) for t in trajectories}
    events = []
    membership = config.zone_membership_ratio
    for t in trajectories:
        for zone in traffic_zones:
            if overlap_ratio(t.first_box, zone.bbox) >= membership:
                events.append((t.first_frame, 0, t.local_id, zone.zone_id))
            if overlap_ratio(t.last_box, zone.bbox) >= membership:
                events.append((t.last_frame, 1, t.local_id, zone.zone_id))
    # Entries before exits within a frame, so an entry only sees earlier exits.
    events.sort()

    camera_id = trajectories[0].camera_id
    queues: Dict[int, Deque[Trajectory]] = {z.zone_id: deque() for z in traffic_zones}
    successor: Dict[TrajectoryKey, TrajectoryKey] = {}
    predecessor: Dict[TrajectoryKey, TrajectoryKey] = {}
    for frame, kind, local_id, zone_id in events:
        trajectory = by_key[(camera_id, local_id)]
        queue = queues[zone_id]
        if kind == 1:
            if trajectory.key not in successor:
                queue.append(trajectory)
            continue

        while queue and frame - queue[0].last_frame > config.reconnect_ttl_frames:
            expired = queue.popleft()
            logger.debug("zone {}: {} expired from queue", zone_id, expired.key)
        if not queue or trajectory.key in predecessor:
            continue
        head = queue[0]
        overlap = iou(head.last_box, trajectory.first_box)
        similarity = cosine_similarity(means[head.key], means[trajectory.key])
        if (
            frame <= head.last_frame
            or overlap < config.iou_reconnect_threshold
            or similarity < config.appearance_reconnect_threshold
        ):
            logger.debug(
                "zone {}: {} not reconnected to {} (iou {:.3f}, similarity {:.3f})",
                zone_id,
                trajectory.key,
                head.key,
                overlap,
                similarity,
            )
            continue
        for other in queues.values():
            if head in other:
                other.remove(head)
        successor[head.key] = trajectory.key
        predecessor[trajectory.key] = head.key
        logger.debug("zone {}: reconnected {} -> {}", zone_id, head.key, trajectory.key)
        if merge_log is not None:
            merge_log.append(
                ZoneMerge(
                    camera_id=camera_id,
                    zone_id=zone_id,
                    exit_ref=head.key,
                    entry_ref=trajectory.key,
                    exit_frame=head.last_frame,
                    entry_frame=frame,
                )
            )

    merged = []
    for trajectory in trajectories:
        if trajectory.key in predecessor:
            continue
        detections = list(trajectory.detections)
        key = trajectory.key
        while key in successor:
            key = successor[key]
            detections.extend(by_key[key].detections)
        merged.append(
            Trajectory(
                camera_id=camera_id,
                local_id=trajectory.local_id,
                detections=tuple(detections),
            )
        )
    merged.sort(key=lambda t: t.local_id)
    if successor:
        logger.info(
            "camera {}: {} isolated trajectories reconnected", camera_id, len(successor)
        )
    return merged


def write_zones(path: Union[str, Path], zones: Sequence[Zone]) -> None:
    """Write zones as ``camera_id,zone_id,class,x,y,w,h,n_entry,n_exit`` rows."""
    _write_rows(
        path,
        (
            [
                str(z.camera_id),
                str(z.zone_id),
                z.zone_class.value,
                *(format_number(v) for v in z.bbox),
                str(z.n_entry),
                str(z.n_exit),
            ]
            for z in sorted(zones, key=lambda z: (z.camera_id, z.zone_id))
        ),
    )


def parse_zones(path: Union[str, Path]) -> Dict[int, List[Zone]]:
    """Read zones written by :func:`write_zones`.

    Raises:
        ParseError: If a line is malformed or names an unknown class.
        ValidationError: If a ``(camera_id, zone_id)`` pair repeats.

    Returns:
        Zones per camera, ordered by zone id.
    """
    zones: Dict[int, List[Zone]] = {}
    seen = set()
    for line_number, fields in _read_rows(path):
        if len(fields) != 9:
            raise ParseError(f"expected 9 fields, got {len(fields)}", path, line_number)
        try:
            camera_id, zone_id = int(fields[0]), int(fields[1])
            zone_class = ZoneClass(fields[2])
            x, y, w, h = (float(v) for v in fields[3:7])
            n_entry, n_exit = int(fields[7]), int(fields[8])
        except ValueError as exc:
            raise ParseError(str(exc), path, line_number) from exc
        if (camera_id, zone_id) in seen:
            raise ValidationError(
                f"{path}:{line_number}: duplicate zone {zone_id} of camera {camera_id}"
            )
        seen.add((camera_id, zone_id))
        zones.setdefault(camera_id, []).append(
            Zone(camera_id, zone_id, (x, y, w, h), n_entry, n_exit, zone_class)
        )
    for camera_zones in zones.values():
        camera_zones.sort(key=lambda z: z.zone_id)
    return zones
