"""The tracking pipeline, from per-camera input files to global identities.

Every camera is processed on its own: single-camera tracking, zone building,
traffic-aware reconnection, feature fusion and zone-pair assignment. The
trajectories of all cameras are then clustered into global identities under the
camera link model, if there is one.

Input directories hold one ``cNNN`` directory per camera with
``detections.csv`` and ``embeddings.csv`` and, optionally, one
``metadata_<attribute>.csv`` per attribute and ``keypoints.csv``. All track
files (single-camera, global and ground truth) are on the global frame clock.
"""

import dataclasses
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
from loguru import logger

from mtmct_tracker.clm import (
    CameraLinkModel,
    annotate_zone_pair,
    enumerate_zone_pairs,
)
from mtmct_tracker.config import PipelineConfig
from mtmct_tracker.errors import ValidationError
from mtmct_tracker.geometry import Box
from mtmct_tracker.ingest import (
    Detection,
    DetectionKey,
    EmbeddingTable,
    MetadataTable,
    TrackTable,
    WheelKeypoints,
    parse_detections,
    parse_embeddings,
    parse_keypoints,
    parse_metadata,
    parse_track_file,
    write_tracks,
)
from mtmct_tracker.mtmct import (
    DistanceMatrix,
    GlobalAssignment,
    build_distance_matrix,
    global_tracks,
    hierarchical_cluster,
)
from mtmct_tracker.reid_fusion import (
    trajectory_direction_histogram,
    trajectory_feature,
    write_fused_features,
)
from mtmct_tracker.sct import (
    Trajectory,
    TrajectoryKey,
    rejoin_detections,
    run_sct,
    trajectory_rows,
)
from mtmct_tracker.utils import assert_is_file, validate_count
from mtmct_tracker.zones import Zone, ZoneMerge, build_zones, reconnect_isolated

# pylint: disable=too-many-arguments,too-many-locals

CAMERA_DIR_PATTERN = re.compile(r"^c(\d+)$")
SCT_FILE_NAME = "sct.csv"

T = TypeVar("T")


@dataclass(frozen=True)
class CameraInputs:
    """The parsed input files of one camera."""

    camera_id: int
    detections: Sequence[Detection]
    embeddings: EmbeddingTable
    metadata: Optional[MetadataTable] = None
    keypoints: Dict[DetectionKey, WheelKeypoints] = dataclasses.field(
        default_factory=dict
    )


@dataclass(frozen=True)
class CameraResult:
    """The per-camera stages' output for one camera."""

    camera_id: int
    sct_count: int
    zones: Tuple[Zone, ...]
    merges: Tuple[ZoneMerge, ...]
    trajectories: Tuple[Trajectory, ...]
    directions: Dict[TrajectoryKey, np.ndarray]


@dataclass(frozen=True)
class TrackResult:
    """The output of a full tracking run."""

    cameras: Dict[int, CameraResult]
    matrix: DistanceMatrix
    assignment: GlobalAssignment
    rows: List[Tuple[int, int, int, Box]]
    constrained: bool

    @property
    def trajectories(self) -> List[Trajectory]:
        return [t for c in sorted(self.cameras) for t in self.cameras[c].trajectories]


def discover_cameras(in_dir: Union[str, Path]) -> Dict[int, Path]:
    """Find the ``cNNN`` camera directories of an input directory.

    Raises:
        ValidationError: If there are none or two name the same camera.
    """
    cameras: Dict[int, Path] = {}
    root = Path(in_dir)
    if not root.is_dir():
        raise ValidationError(f"{root} is not a directory")
    for child in sorted(root.iterdir()):
        match = CAMERA_DIR_PATTERN.match(child.name)
        if not match or not child.is_dir():
            continue
        camera_id = int(match.group(1))
        if camera_id in cameras:
            raise ValidationError(
                f"{child} and {cameras[camera_id]} are both camera {camera_id}"
            )
        cameras[camera_id] = child
    if not cameras:
        raise ValidationError(f"{root} has no camera directories")
    return dict(sorted(cameras.items()))


def load_camera_inputs(
    camera_dir: Union[str, Path], camera_id: int, config: PipelineConfig
) -> CameraInputs:
    """Parse the input files of one camera, shifting frames onto the global clock.

    Raises:
        FileNotFoundError: If the detection or embedding file is missing.
    """
    camera_dir = Path(camera_dir)
    offset = config.frame_offset(camera_id)
    detections = parse_detections(
        assert_is_file(camera_dir / "detections.csv"), camera_id, offset
    )
    embeddings = parse_embeddings(
        assert_is_file(camera_dir / "embeddings.csv"), detections, camera_id, offset
    )
    metadata = None
    metadata_files = sorted(camera_dir.glob("metadata_*.csv"))
    if metadata_files:
        attributes = {}
        for path in metadata_files:
            table = parse_metadata(path, detections, camera_id, offset)
            attributes[table.attribute] = table
        metadata = MetadataTable(attributes)
    keypoints: Dict[DetectionKey, WheelKeypoints] = {}
    keypoint_file = camera_dir / "keypoints.csv"
    if keypoint_file.is_file():
        keypoints = parse_keypoints(keypoint_file, offset)
    logger.debug(
        "camera {}: {} detections, {} metadata attributes, {} keypoint rows",
        camera_id,
        len(detections),
        len(metadata_files),
        len(keypoints),
    )
    return CameraInputs(camera_id, detections, embeddings, metadata, keypoints)


def load_inputs(
    in_dir: Union[str, Path], config: PipelineConfig
) -> List[CameraInputs]:
    """Parse the input files of every camera of an input directory."""
    return [
        load_camera_inputs(path, camera_id, config)
        for camera_id, path in discover_cameras(in_dir).items()
    ]


def sct_trajectories(
    inputs: CameraInputs,
    config: PipelineConfig,
    sct_tracks: Optional[TrackTable] = None,
) -> List[Trajectory]:
    """Track one camera, or take its tracks from an earlier SCT run."""
    if sct_tracks is None:
        trajectories = run_sct(inputs.detections, inputs.embeddings, config)
    else:
        trajectories = rejoin_detections(
            inputs.camera_id, sct_tracks.get(inputs.camera_id, {}), inputs.detections
        )
    return sorted(trajectories, key=lambda t: t.local_id)


def run_camera(
    inputs: CameraInputs,
    config: PipelineConfig,
    model: Optional[CameraLinkModel] = None,
    sct_tracks: Optional[TrackTable] = None,
) -> CameraResult:
    """Run every per-camera stage on one camera.

    Zones for reconnection are always built from this run's trajectories. Zone
    pairs come from the model when one is given, so their ids match its links.
    Reconnection is skipped when ``config.reconnect`` is off.

    Args:
        inputs: The camera's parsed inputs.
        config: The pipeline configuration.
        model: The camera link model, if any.
        sct_tracks: Tracks of an earlier SCT run to use instead of running SCT.

    Returns:
        The camera's trajectories with fused features, zone visits and zone
        pairs, plus its zones, merges and direction histograms.
    """
    camera_id = inputs.camera_id
    trajectories = sct_trajectories(inputs, config, sct_tracks)
    sct_count = len(trajectories)
    zones = build_zones(trajectories, config) if trajectories else []
    merges: List[ZoneMerge] = []
    if config.reconnect:
        trajectories = reconnect_isolated(
            trajectories, zones, inputs.embeddings, config, merges
        )

    if model is None:
        pair_zones: Sequence[Zone] = zones
        zone_pairs = enumerate_zone_pairs(zones, config.traffic_aware_pairs)
    else:
        pair_zones = model.camera_zones(camera_id)
        zone_pairs = list(model.camera_pairs(camera_id))
        if not pair_zones:
            logger.warning("camera {} is not in the camera link model", camera_id)

    annotated = []
    directions: Dict[TrajectoryKey, np.ndarray] = {}
    for trajectory in trajectories:
        feature = trajectory_feature(
            trajectory, inputs.embeddings, inputs.metadata, config
        )
        trajectory = annotate_zone_pair(
            trajectory, zone_pairs, pair_zones, config.max_pair_distance
        )
        annotated.append(dataclasses.replace(trajectory, fused_feature=feature.full))
        directions[trajectory.key] = trajectory_direction_histogram(
            trajectory, inputs.keypoints, config.y_axis_down
        )
    unpaired = sum(1 for t in annotated if t.zone_pair is None)
    logger.info(
        "camera {}: {} trajectories ({} after reconnection), {} without zone pair",
        camera_id,
        sct_count,
        len(annotated),
        unpaired,
    )
    return CameraResult(
        camera_id=camera_id,
        sct_count=sct_count,
        zones=tuple(zones),
        merges=tuple(merges),
        trajectories=tuple(annotated),
        directions=directions,
    )


def _map_cameras(
    function: Callable[[CameraInputs], T], items: Sequence[CameraInputs], jobs: int
) -> List[T]:
    validate_count(jobs, "jobs")
    if jobs == 1 or len(items) < 2:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(function, items))


def run_sct_stage(
    camera_inputs: Sequence[CameraInputs], config: PipelineConfig, jobs: int = 1
) -> Dict[int, List[Trajectory]]:
    """Run single-camera tracking on every camera."""
    results = _map_cameras(
        lambda inputs: sct_trajectories(inputs, config), camera_inputs, jobs
    )
    return {i.camera_id: r for i, r in zip(camera_inputs, results)}


def run_zone_stage(
    camera_inputs: Sequence[CameraInputs],
    config: PipelineConfig,
    sct_tracks: Optional[TrackTable] = None,
    jobs: int = 1,
) -> Dict[int, List[Zone]]:
    """Build every camera's zones from its single-camera trajectories."""

    def zones_of(inputs: CameraInputs) -> List[Zone]:
        trajectories = sct_trajectories(inputs, config, sct_tracks)
        return build_zones(trajectories, config) if trajectories else []

    results = _map_cameras(zones_of, camera_inputs, jobs)
    return {i.camera_id: r for i, r in zip(camera_inputs, results)}


def track(
    camera_inputs: Sequence[CameraInputs],
    config: PipelineConfig,
    model: Optional[CameraLinkModel] = None,
    sct_tracks: Optional[TrackTable] = None,
    jobs: int = 1,
) -> TrackResult:
    """Run the whole pipeline.

    Args:
        camera_inputs: The parsed inputs of every camera.
        config: The pipeline configuration.
        model: The camera link model. Without one every cross-camera pair is a
            candidate match.
        sct_tracks: Tracks of an earlier SCT run to use instead of running SCT.
        jobs: Cameras processed in parallel. Results do not depend on it.

    Returns:
        The per-camera results, distance matrix, assignment and global track
        rows.
    """
    if model is None:
        logger.warning(
            "no camera link model given, every cross-camera pair is a candidate"
        )
    camera_ids = [i.camera_id for i in camera_inputs]
    if len(set(camera_ids)) != len(camera_ids):
        raise ValidationError(f"camera ids repeat: {camera_ids}")
    results = _map_cameras(
        lambda inputs: run_camera(inputs, config, model, sct_tracks),
        sorted(camera_inputs, key=lambda i: i.camera_id),
        jobs,
    )
    cameras = {r.camera_id: r for r in results}
    trajectories = [t for r in results for t in r.trajectories]
    matrix = build_distance_matrix(trajectories, model)
    assignment = hierarchical_cluster(
        matrix, config.cluster_threshold, config.cluster_iterations
    )
    rows = global_tracks(trajectories, assignment)
    logger.info(
        "{} trajectories in {} cameras -> {} global identities",
        len(trajectories),
        len(cameras),
        len(assignment.clusters()),
    )
    return TrackResult(
        cameras=cameras,
        matrix=matrix,
        assignment=assignment,
        rows=rows,
        constrained=model is not None,
    )


def run_report(result: TrackResult) -> Dict[str, Any]:
    """Summarise a run as a JSON compatible dictionary."""
    cameras = {}
    for camera_id, camera in sorted(result.cameras.items()):
        zone_classes: Dict[str, int] = {}
        for zone in camera.zones:
            name = zone.zone_class.value
            zone_classes[name] = zone_classes.get(name, 0) + 1
        cameras[str(camera_id)] = {
            "sct_trajectories": camera.sct_count,
            "trajectories": len(camera.trajectories),
            "zones": zone_classes,
            "merges": [
                {
                    "zone_id": m.zone_id,
                    "exit_local_id": m.exit_ref[1],
                    "entry_local_id": m.entry_ref[1],
                    "exit_frame": m.exit_frame,
                    "entry_frame": m.entry_frame,
                }
                for m in camera.merges
            ],
        }
    link_matches = {
        "none" if link is None else str(link): count
        for link, count in sorted(
            result.assignment.link_match_counts().items(),
            key=lambda item: -1 if item[0] is None else item[0],
        )
    }
    trajectories = []
    for trajectory in result.trajectories:
        histogram = result.cameras[trajectory.camera_id].directions[trajectory.key]
        trajectories.append(
            {
                "camera_id": trajectory.camera_id,
                "local_id": trajectory.local_id,
                "global_id": result.assignment.global_ids[trajectory.key],
                "zone_pair": trajectory.zone_pair,
                "first_frame": trajectory.first_frame,
                "last_frame": trajectory.last_frame,
                "directions": [int(v) for v in histogram],
            }
        )
    return {
        "constrained": result.constrained,
        "global_identities": len(result.assignment.clusters()),
        "pruning": result.matrix.pruning_stats(),
        "link_matches": link_matches,
        "cameras": cameras,
        "trajectories": trajectories,
    }


def write_json(path: Union[str, Path], document: Any) -> None:
    """Write a JSON document with sorted keys and a trailing newline."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(
        json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def write_track_outputs(result: TrackResult, out_dir: Union[str, Path]) -> Path:
    """Write ``tracks.csv``, ``fused_features.csv`` and ``report.json``.

    Returns:
        The path of the global track file.
    """
    out = Path(out_dir)
    tracks_path = out / "tracks.csv"
    write_tracks(tracks_path, result.rows)
    write_fused_features(out / "fused_features.csv", result.trajectories)
    write_json(out / "report.json", run_report(result))
    return tracks_path


def write_sct_outputs(
    trajectories: Dict[int, List[Trajectory]], out_dir: Union[str, Path]
) -> List[Path]:
    """Write every camera's trajectories to ``cNNN/sct.csv``.

    Returns:
        The written paths, in camera order.
    """
    paths = []
    for camera_id, camera_trajectories in sorted(trajectories.items()):
        path = Path(out_dir) / f"c{camera_id:03d}" / SCT_FILE_NAME
        write_tracks(path, trajectory_rows(camera_trajectories))
        paths.append(path)
    return paths


def load_sct_tracks(sct_dir: Union[str, Path]) -> TrackTable:
    """Read the ``cNNN/sct.csv`` files written by :func:`write_sct_outputs`.

    Raises:
        ValidationError: If a file holds rows of another camera.
    """
    tracks: TrackTable = {}
    for camera_id, camera_dir in discover_cameras(sct_dir).items():
        path = camera_dir / SCT_FILE_NAME
        if not path.is_file():
            continue
        table = parse_track_file(path)
        if set(table) - {camera_id}:
            raise ValidationError(f"{path} holds rows of cameras {sorted(table)}")
        tracks[camera_id] = table.get(camera_id, {})
    return tracks
