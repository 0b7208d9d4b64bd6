"""Trajectory-level appearance and metadata features.

The appearance of a trajectory is pooled from its frame embeddings in two
stages, clip by clip and then across clips. Metadata class probabilities are
averaged per attribute and concatenated to the appearance, scaled by a fusion
weight. Wheel keypoints give each detection a driving direction.
"""

import bisect
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from mtmct_tracker.config import PipelineConfig
from mtmct_tracker.constants import DEFAULT_CLIP_SIZE, METADATA_ATTRIBUTES
from mtmct_tracker.errors import DegenerateError, DimensionError, ValidationError
from mtmct_tracker.ingest import (
    PROBABILITY_TOLERANCE,
    DetectionKey,
    EmbeddingTable,
    MetadataTable,
    WheelKeypoints,
    _write_rows,
)
from mtmct_tracker.sct import Trajectory
from mtmct_tracker.utils import format_number, validate_count

NORM_TOLERANCE = 1e-6
DIRECTION_BINS = 8
# Lower edges of the direction regions after shifting angles by NARROW_HALF_WIDTH.
NARROW_HALF_WIDTH = 10.0
_REGION_EDGES = (0.0, 20.0, 90.0, 110.0, 180.0, 200.0, 270.0, 290.0)


@dataclass(frozen=True)
class FusedFeature:
    """Normalised appearance followed by weighted metadata blocks."""

    appearance: np.ndarray
    metadata: Tuple[np.ndarray, ...] = ()

    @property
    def full(self) -> np.ndarray:
        """The concatenated feature vector."""
        return np.concatenate((self.appearance, *self.metadata))

    @property
    def dim(self) -> int:
        return int(self.appearance.size + sum(block.size for block in self.metadata))


def trajectory_appearance(
    embeddings: Sequence[Sequence[float]],
    weights: Optional[Sequence[float]] = None,
    clip_size: int = DEFAULT_CLIP_SIZE,
) -> np.ndarray:
    """Pool frame embeddings into one unit-length trajectory embedding.

    Frames are split into consecutive clips of ``clip_size`` frames. Each clip
    is the weighted mean of its frames, clips whose weights are all zero being
    skipped, and the trajectory is the plain mean of its clips.

    Args:
        embeddings: One embedding per frame, in frame order.
        weights: Nonnegative per-frame weights. Defaults to uniform.
        clip_size: Frames per clip.

    Raises:
        ValidationError: If there are no frames, the weights do not match the
            frames, or a weight is negative or all are zero.
        DegenerateError: If the pooled embedding is the zero vector.

    Returns:
        The L2-normalised trajectory embedding.
    """
    validate_count(clip_size, "clip_size")
    frames = np.asarray(embeddings, dtype=float)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ValidationError("trajectory_appearance needs at least one embedding")
    if weights is None:
        frame_weights = np.ones(frames.shape[0])
    else:
        frame_weights = np.asarray(weights, dtype=float)
        if frame_weights.shape != (frames.shape[0],):
            raise ValidationError(
                f"{frame_weights.size} weights given for {frames.shape[0]} frames"
            )
        if np.any(frame_weights < 0) or not np.any(frame_weights > 0):
            raise ValidationError("weights must be nonnegative and not all zero")

    clips = []
    for start in range(0, frames.shape[0], clip_size):
        clip_weights = frame_weights[start : start + clip_size]
        total = clip_weights.sum()
        if total > 0:
            clips.append(clip_weights @ frames[start : start + clip_size] / total)
    pooled = np.mean(clips, axis=0)
    norm = float(np.linalg.norm(pooled))
    if norm == 0.0:
        raise DegenerateError("pooled trajectory embedding is zero")
    return pooled / norm


def metadata_feature(rows: Sequence[Sequence[float]]) -> np.ndarray:
    """Average per-frame class probabilities of one attribute.

    Raises:
        ValidationError: If there are no rows or their class counts differ.
    """
    if len(rows) == 0:
        raise ValidationError("metadata_feature needs at least one row")
    class_counts = {len(row) for row in rows}
    if len(class_counts) != 1:
        raise ValidationError(
            f"metadata rows have different class counts {sorted(class_counts)}"
        )
    return np.asarray(rows, dtype=float).mean(axis=0)


def fuse(
    appearance: np.ndarray, metadata: Sequence[np.ndarray], weight: float
) -> FusedFeature:
    """Concatenate an appearance vector with weighted metadata distributions.

    Args:
        appearance: A unit-length appearance embedding.
        metadata: One probability vector per attribute, in a fixed attribute
            order.
        weight: The fusion weight applied to every metadata block.

    Raises:
        ValidationError: If the appearance is not unit length, a metadata vector
            is not a distribution or the weight is negative.

    Returns:
        The fused feature.
    """
    if weight < 0:
        raise ValidationError(f"metadata weight must be nonnegative but is {weight}")
    appearance = np.asarray(appearance, dtype=float)
    if abs(float(np.linalg.norm(appearance)) - 1.0) > NORM_TOLERANCE:
        raise ValidationError("appearance embedding must have unit length")
    blocks = []
    for block in metadata:
        vector = np.asarray(block, dtype=float)
        if np.any(vector < 0) or abs(vector.sum() - 1.0) > PROBABILITY_TOLERANCE:
            raise ValidationError(f"metadata vector {vector} is not a distribution")
        blocks.append(weight * vector)
    return FusedFeature(appearance=appearance, metadata=tuple(blocks))


def pair_distance(
    feature_a: Union[FusedFeature, np.ndarray],
    feature_b: Union[FusedFeature, np.ndarray],
) -> float:
    """Euclidean distance between two fused features.

    Raises:
        DimensionError: If the features differ in length.
    """
    vec_a = feature_a.full if isinstance(feature_a, FusedFeature) else feature_a
    vec_b = feature_b.full if isinstance(feature_b, FusedFeature) else feature_b
    if vec_a.shape != vec_b.shape:
        raise DimensionError(
            f"cannot compare features of length {vec_a.size} and {vec_b.size}"
        )
    return float(np.linalg.norm(vec_a - vec_b))


def metadata_attribute_order(metadata: MetadataTable) -> List[str]:
    """Return the order metadata blocks are concatenated in.

    The standard attributes come first in their usual order, any others follow
    alphabetically.
    """
    known = [name for name in METADATA_ATTRIBUTES if name in metadata.attributes]
    return known + sorted(set(metadata.attributes) - set(METADATA_ATTRIBUTES))


def trajectory_feature(
    trajectory: Trajectory,
    embeddings: EmbeddingTable,
    metadata: Optional[MetadataTable],
    config: PipelineConfig,
    weights: Optional[Sequence[float]] = None,
) -> FusedFeature:
    """Build the fused feature of one trajectory.

    Args:
        trajectory: The trajectory.
        embeddings: Embeddings covering its detections.
        metadata: Metadata covering its detections, if any.
        config: Supplies the clip size and the metadata weight.
        weights: Optional per-frame attention weights.

    Raises:
        CoverageError: If a detection has no embedding or metadata row.

    Returns:
        The fused feature.
    """
    keys = [d.key for d in trajectory.detections]
    appearance = trajectory_appearance(
        embeddings.stack(keys), weights, config.clip_size
    )
    blocks = []
    if metadata is not None:
        for name in metadata_attribute_order(metadata):
            table = metadata.attributes[name]
            blocks.append(metadata_feature([table.vector(key) for key in keys]))
    return fuse(appearance, blocks, config.metadata_weight)


def direction_angle(wheels: WheelKeypoints, y_axis_down: bool = False) -> float:
    """Return the driving direction of a vehicle in degrees.

    The direction points from the centre of the back axle to the centre of the
    front axle. It is measured counterclockwise from the positive x-axis, in
    mathematical coordinates; with ``y_axis_down`` the image's y-axis is
    flipped first.

    Raises:
        ValidationError: If a keypoint is not finite.
        DegenerateError: If the axle centres coincide.

    Returns:
        The angle, in [0, 360).
    """
    points = np.array(
        [wheels.front_left, wheels.front_right, wheels.back_left, wheels.back_right],
        dtype=float,
    )
    if not np.all(np.isfinite(points)):
        raise ValidationError("wheel keypoints must be finite")
    dx, dy = points[:2].mean(axis=0) - points[2:].mean(axis=0)
    if math.hypot(dx, dy) < 1e-9:
        raise DegenerateError("front and back axle centres coincide")
    if y_axis_down:
        dy = -dy
    theta = math.degrees(math.atan2(dy, dx)) % 360.0
    return 0.0 if theta >= 360.0 else theta


def direction_bin(theta: float) -> int:
    """Return which of the eight direction regions an angle falls in.

    Regions 0, 2, 4 and 6 are 20 degrees wide and centred on 0, 90, 180 and 270
    degrees. Regions 1, 3, 5 and 7 are 70 degrees wide and fill the gaps.
    """
    shifted = (theta + NARROW_HALF_WIDTH) % 360.0
    return bisect.bisect_right(_REGION_EDGES, shifted) - 1


def trajectory_direction_histogram(
    trajectory: Trajectory,
    keypoints: Mapping[DetectionKey, WheelKeypoints],
    y_axis_down: bool = True,
) -> np.ndarray:
    """Count a trajectory's detections per direction region.

    Detections without keypoints, or with coinciding axle centres, are not
    counted.
    """
    histogram = np.zeros(DIRECTION_BINS, dtype=int)
    for detection in trajectory.detections:
        wheels = keypoints.get(detection.key)
        if wheels is None:
            continue
        try:
            histogram[direction_bin(direction_angle(wheels, y_axis_down))] += 1
        except DegenerateError:
            continue
    return histogram


def write_fused_features(
    path: Union[str, Path], trajectories: Sequence[Trajectory]
) -> None:
    """Write ``camera_id,local_id,v1,...,vD`` rows for trajectories with features."""
    _write_rows(
        path,
        (
            [
                str(t.camera_id),
                str(t.local_id),
                *(format_number(float(v)) for v in t.fused_feature),
            ]
            for t in sorted(trajectories, key=lambda t: t.key)
            if t.fused_feature is not None
        ),
    )
