"""Pipeline configuration."""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

from mtmct_tracker import constants
from mtmct_tracker.errors import ValidationError
from mtmct_tracker.utils import (
    parse_int_keys,
    validate_count,
    validate_flag,
    validate_number,
    validate_percentiles,
    validate_positive,
    validate_unit_interval,
)

# pylint: disable=too-many-instance-attributes


@dataclass(frozen=True)
class PipelineConfig:
    """All tunables of the tracking pipeline.

    Thresholds documented as ratios live in [0, 1]. Frame counts are in frames of
    the global, synchronised clock. ``frame_offsets`` maps a camera id to the
    offset added to that camera's local frame indices.
    """

    bandwidth: float = constants.DEFAULT_BANDWIDTH
    rho_entry: float = constants.DEFAULT_RHO_ENTRY
    rho_exit: float = constants.DEFAULT_RHO_EXIT
    rho_traffic_aware: float = constants.DEFAULT_RHO_TRAFFIC_AWARE
    min_zone_points: int = constants.DEFAULT_MIN_ZONE_POINTS
    min_zone_area_ratio: float = constants.DEFAULT_MIN_ZONE_AREA_RATIO
    zone_membership_ratio: float = constants.DEFAULT_ZONE_MEMBERSHIP_RATIO
    iou_assoc_threshold: float = constants.DEFAULT_IOU_ASSOC_THRESHOLD
    gap_frames: int = constants.DEFAULT_GAP_FRAMES
    gap_max: int = constants.DEFAULT_GAP_MAX
    edge_weights: Tuple[float, float, float] = constants.DEFAULT_EDGE_WEIGHTS
    merge_threshold: float = constants.DEFAULT_MERGE_THRESHOLD
    iou_reconnect_threshold: float = constants.DEFAULT_IOU_RECONNECT_THRESHOLD
    appearance_reconnect_threshold: float = (
        constants.DEFAULT_APPEARANCE_RECONNECT_THRESHOLD
    )
    reconnect_ttl_frames: int = constants.DEFAULT_RECONNECT_TTL_FRAMES
    reconnect: bool = constants.DEFAULT_RECONNECT
    clip_size: int = constants.DEFAULT_CLIP_SIZE
    metadata_weight: float = constants.DEFAULT_METADATA_WEIGHT
    max_pair_distance: float = constants.DEFAULT_MAX_PAIR_DISTANCE
    traffic_aware_pairs: bool = constants.DEFAULT_TRAFFIC_AWARE_PAIRS
    min_link_samples: int = constants.DEFAULT_MIN_LINK_SAMPLES
    window_percentiles: Tuple[float, float] = constants.DEFAULT_WINDOW_PERCENTILES
    window_padding: int = constants.DEFAULT_WINDOW_PADDING
    cluster_threshold: float = constants.DEFAULT_CLUSTER_THRESHOLD
    cluster_iterations: int = constants.DEFAULT_CLUSTER_ITERATIONS
    eval_iou: float = constants.DEFAULT_EVAL_IOU
    y_axis_down: bool = True
    frame_offsets: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        validate_positive(self.bandwidth, "bandwidth")
        for name in (
            "rho_entry",
            "rho_exit",
            "rho_traffic_aware",
            "zone_membership_ratio",
            "iou_assoc_threshold",
            "iou_reconnect_threshold",
            "appearance_reconnect_threshold",
        ):
            validate_unit_interval(getattr(self, name), name)
        validate_count(self.min_zone_points, "min_zone_points")
        validate_positive(self.min_zone_area_ratio, "min_zone_area_ratio")
        validate_count(self.gap_frames, "gap_frames", minimum=0)
        validate_count(self.gap_max, "gap_max")
        weights = [validate_number(w, "edge_weights") for w in self.edge_weights]
        if len(weights) != 3 or any(w < 0 for w in weights):
            raise ValidationError(
                f"edge_weights must be three nonnegative numbers but are "
                f"{self.edge_weights}"
            )
        validate_positive(self.merge_threshold, "merge_threshold")
        validate_count(self.reconnect_ttl_frames, "reconnect_ttl_frames")
        validate_count(self.clip_size, "clip_size")
        if validate_number(self.metadata_weight, "metadata_weight") < 0:
            raise ValidationError(
                f"metadata_weight must be nonnegative but is {self.metadata_weight}"
            )
        validate_positive(self.max_pair_distance, "max_pair_distance")
        validate_count(self.min_link_samples, "min_link_samples")
        validate_percentiles(self.window_percentiles)
        validate_count(self.window_padding, "window_padding", minimum=0)
        validate_positive(self.cluster_threshold, "cluster_threshold")
        validate_count(self.cluster_iterations, "cluster_iterations")
        for name in ("reconnect", "traffic_aware_pairs", "y_axis_down"):
            validate_flag(getattr(self, name), name)
        if not 0.0 < validate_number(self.eval_iou, "eval_iou") < 1.0:
            raise ValidationError(f"eval_iou must be in (0, 1) but is {self.eval_iou}")

    def frame_offset(self, camera_id: int) -> int:
        """Return the offset of camera_id's local clock, 0 when not configured."""
        return self.frame_offsets.get(camera_id, 0)

    def to_dict(self) -> Dict[str, Any]:
        """Convert the configuration to a JSON compatible dictionary."""
        result = dataclasses.asdict(self)
        result["edge_weights"] = list(self.edge_weights)
        result["window_percentiles"] = list(self.window_percentiles)
        result["frame_offsets"] = {
            str(key): value for key, value in sorted(self.frame_offsets.items())
        }
        return result

    @classmethod
    def from_dict(cls, config_dict: Mapping[str, Any]) -> "PipelineConfig":
        """Create a configuration from a flat dictionary.

        Args:
            config_dict: Field names mapped to values. Missing fields keep their
                defaults.

        Raises:
            ValidationError: If a key is unknown or a value is invalid.

        Returns:
            The configuration.
        """
        valid_fields = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(config_dict) - valid_fields)
        if unknown:
            raise ValidationError(f"Unknown config keys: {', '.join(unknown)}")
        values = dict(config_dict)
        for name in ("edge_weights", "window_percentiles"):
            if name in values:
                if not isinstance(values[name], (list, tuple)):
                    raise ValidationError(
                        f"{name} must be a list of numbers but is {values[name]!r}"
                    )
                values[name] = tuple(validate_number(v, name) for v in values[name])
        if "frame_offsets" in values:
            if not isinstance(values["frame_offsets"], Mapping):
                raise ValidationError("frame_offsets must be a JSON object")
            values["frame_offsets"] = parse_int_keys(
                values["frame_offsets"], "frame_offsets"
            )
        try:
            return cls(**values)
        except TypeError as exc:
            raise ValidationError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "PipelineConfig":
        """Load a configuration from a flat JSON document.

        Args:
            path: The path of the JSON file.

        Raises:
            ValidationError: If the document is not a JSON object or is invalid.

        Returns:
            The configuration.
        """
        try:
            document = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(document, dict):
            raise ValidationError(f"{path} must contain a JSON object")
        return cls.from_dict(document)
