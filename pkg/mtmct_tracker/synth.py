"""Synthetic multi-camera traffic scenarios.

Vehicles drive along road polylines on a flat world plane watched by cameras
that map world rectangles onto their images by scaling. A scenario produces
the pipeline's input files (detections, embeddings, metadata, wheel keypoints),
the ground truth and the true inter-camera transitions, all determined by the
scenario's seed. Every output file draws from its own random stream, derived
from the seed and the file's role.
"""

import dataclasses
import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from mtmct_tracker.errors import ValidationError
from mtmct_tracker.geometry import Box, Point
from mtmct_tracker.ingest import (
    AttributeTable,
    Detection,
    DetectionKey,
    EmbeddingTable,
    MetadataTable,
    WheelKeypoints,
    write_detections,
    write_embeddings,
    write_keypoints,
    write_metadata,
    write_tracks,
)
from mtmct_tracker.utils import validate_count, validate_unit_interval

# pylint: disable=too-many-instance-attributes,too-many-locals

MIN_BOX_SIDE = 2.0
# Wheelbase and track as fractions of the box width and height.
WHEELBASE_RATIO = 0.6
TRACK_RATIO = 0.5
CHAIN_SPEED_RANGE = (9.8, 10.2)
CHAIN_SPAWN_INTERVAL = (60, 100)


def camera_dir_name(camera_id: int) -> str:
    """Return the directory name holding one camera's input files."""
    return f"c{camera_id:03d}"


def _stream(seed: int, role: str) -> np.random.Generator:
    """The random stream of one output role."""
    sequence = np.random.SeedSequence([seed, zlib.crc32(role.encode())])
    return np.random.default_rng(sequence)


@dataclass(frozen=True)
class CameraSpec:
    """A camera watching an axis-aligned rectangle of the world plane."""

    camera_id: int
    origin: Point
    width: int = 1280
    height: int = 720
    scale: float = 1.0
    frame_offset: int = 0

    def to_pixels(self, point: Point) -> Point:
        return (
            (point[0] - self.origin[0]) * self.scale,
            (point[1] - self.origin[1]) * self.scale,
        )


@dataclass(frozen=True)
class RoadSpec:
    """A road as a polyline of world points, driven from first to last."""

    road_id: int
    points: Tuple[Point, ...]

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ValidationError(f"road {self.road_id} needs at least two points")

    @property
    def cumulative(self) -> np.ndarray:
        coords = np.asarray(self.points, dtype=float)
        steps = np.linalg.norm(np.diff(coords, axis=0), axis=1)
        return np.concatenate(([0.0], np.cumsum(steps)))

    @property
    def length(self) -> float:
        return float(self.cumulative[-1])

    def locate(self, arc: float) -> Tuple[Point, Point]:
        """Return the point at an arc length and the unit driving direction."""
        cumulative = self.cumulative
        coords = np.asarray(self.points, dtype=float)
        x = float(np.interp(arc, cumulative, coords[:, 0]))
        y = float(np.interp(arc, cumulative, coords[:, 1]))
        segment = np.searchsorted(cumulative, arc, side="right") - 1
        segment = int(np.clip(segment, 0, len(coords) - 2))
        step = coords[segment + 1] - coords[segment]
        direction = step / np.linalg.norm(step)
        return (x, y), (float(direction[0]), float(direction[1]))


@dataclass(frozen=True)
class StopSpec:
    """Every vehicle on a road halts, out of sight, at an arc length."""

    road_id: int
    position: float
    duration: int


@dataclass(frozen=True)
class NoiseSpec:
    """Observation noise of detections, embeddings and metadata."""

    sigma_box: float = 1.0
    miss_rate: float = 0.0
    fp_rate: float = 0.0
    sigma_emb: float = 0.05
    flip_rate: float = 0.0


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything a synthetic scenario is generated from."""

    seed: int
    world_size: Tuple[float, float]
    cameras: Tuple[CameraSpec, ...]
    roads: Tuple[RoadSpec, ...]
    vehicle_count: int
    speed_range: Tuple[float, float] = (8.0, 12.0)
    spawn_interval: Tuple[int, int] = (40, 80)
    box_size: Tuple[float, float] = (80.0, 50.0)
    stops: Tuple[StopSpec, ...] = ()
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    embedding_dim: int = 32
    appearance_models: int = 3
    appearance_spread: float = 0.06
    metadata_classes: Mapping[str, int] = field(
        default_factory=lambda: {"type": 3, "brand": 4, "color": 3}
    )

    def __post_init__(self) -> None:
        world_w, world_h = self.world_size
        if not self.cameras:
            raise ValidationError("a scenario needs at least one camera")
        camera_ids = [c.camera_id for c in self.cameras]
        if len(set(camera_ids)) != len(camera_ids):
            raise ValidationError(f"camera ids repeat: {camera_ids}")
        for camera in self.cameras:
            x0, y0 = camera.origin
            x1 = x0 + camera.width / camera.scale
            y1 = y0 + camera.height / camera.scale
            if camera.scale <= 0 or x0 < 0 or y0 < 0 or x1 > world_w or y1 > world_h:
                raise ValidationError(
                    f"camera {camera.camera_id} sees ({x0}, {y0})-({x1}, {y1}), "
                    f"outside the {world_w}x{world_h} world plane"
                )
        road_ids = {r.road_id for r in self.roads}
        if not road_ids:
            raise ValidationError("a scenario needs at least one road")
        for stop in self.stops:
            if stop.road_id not in road_ids:
                raise ValidationError(f"stop on unknown road {stop.road_id}")
            validate_count(stop.duration, "stop duration")
        validate_count(self.vehicle_count, "vehicle_count", minimum=0)
        low, high = self.speed_range
        if not 0 < low <= high:
            raise ValidationError(f"invalid speed range {self.speed_range}")
        if not 1 <= self.spawn_interval[0] <= self.spawn_interval[1]:
            raise ValidationError(f"invalid spawn interval {self.spawn_interval}")
        for name in ("miss_rate", "fp_rate", "flip_rate"):
            validate_unit_interval(getattr(self.noise, name), name)
        if self.noise.sigma_box < 0 or self.noise.sigma_emb < 0:
            raise ValidationError("noise deviations must be nonnegative")
        validate_count(self.embedding_dim, "embedding_dim", minimum=2)
        validate_count(self.appearance_models, "appearance_models")
        for attribute, classes in self.metadata_classes.items():
            validate_count(classes, f"{attribute} classes", minimum=2)

    def replace(self, **changes: Any) -> "ScenarioSpec":
        """Return a copy with some fields changed."""
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        """Convert the spec to a JSON compatible dictionary."""
        document = dataclasses.asdict(self)
        document["metadata_classes"] = dict(self.metadata_classes)
        return json.loads(json.dumps(document))

    @classmethod
    def from_dict(cls, document: Mapping[str, Any]) -> "ScenarioSpec":
        """Build a spec from :meth:`to_dict` output.

        Raises:
            ValidationError: If a field is missing, unknown or invalid.
        """
        try:
            values = dict(document)
            unknown = sorted(set(values) - {f.name for f in dataclasses.fields(cls)})
            if unknown:
                raise ValidationError(f"Unknown scenario keys: {', '.join(unknown)}")
            values["world_size"] = tuple(float(v) for v in values["world_size"])
            values["cameras"] = tuple(
                CameraSpec(**{**c, "origin": tuple(c["origin"])})
                for c in values["cameras"]
            )
            values["roads"] = tuple(
                RoadSpec(r["road_id"], tuple(tuple(p) for p in r["points"]))
                for r in values["roads"]
            )
            values["stops"] = tuple(StopSpec(**s) for s in values.get("stops", ()))
            if "noise" in values:
                values["noise"] = NoiseSpec(**values["noise"])
            for name in ("speed_range", "spawn_interval", "box_size"):
                if name in values:
                    values[name] = tuple(values[name])
            return cls(**values)
        except ValidationError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed scenario spec: {exc!r}") from exc

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "ScenarioSpec":
        """Load a spec from a JSON file."""
        try:
            document = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(document, dict):
            raise ValidationError(f"{path} must contain a JSON object")
        return cls.from_dict(document)


@dataclass(frozen=True)
class TrueTransition:
    """A vehicle leaving one camera and next appearing in another."""

    vehicle_id: int
    source_camera: int
    dest_camera: int
    source_frame: int
    dest_frame: int

    @property
    def dt(self) -> int:
        return self.dest_frame - self.source_frame


@dataclass
class Scenario:
    """The generated observations and truth of one scenario.

    Global identities in the ground truth are vehicle ids plus one.
    """

    spec: ScenarioSpec
    detections: Dict[int, List[Detection]]
    embeddings: Dict[int, EmbeddingTable]
    metadata: Dict[int, MetadataTable]
    keypoints: Dict[int, Dict[DetectionKey, WheelKeypoints]]
    ground_truth: List[Tuple[int, int, int, Box]]
    transitions: List[TrueTransition]
    latents: Dict[int, np.ndarray]
    vehicle_of: Dict[DetectionKey, int]


@dataclass(frozen=True)
class _Vehicle:
    vehicle_id: int
    road: RoadSpec
    spawn: int
    speed: float
    model: int
    classes: Dict[str, int]


def _arc_at(
    vehicle: _Vehicle, stops: Sequence[StopSpec], frame: int
) -> Optional[float]:
    """Arc length of a vehicle at a frame, None while stopped."""
    elapsed = float(frame - vehicle.spawn)
    for stop in stops:
        reach = stop.position / vehicle.speed
        if elapsed < reach:
            break
        if elapsed < reach + stop.duration:
            return None
        elapsed -= stop.duration
    return elapsed * vehicle.speed


def _travel_frames(vehicle: _Vehicle, stops: Sequence[StopSpec]) -> int:
    total = vehicle.road.length / vehicle.speed + sum(s.duration for s in stops)
    return int(math.ceil(total))


def _spawn_vehicles(spec: ScenarioSpec) -> List[_Vehicle]:
    rng = _stream(spec.seed, "vehicles")
    vehicles = []
    frame = 0
    for vehicle_id in range(spec.vehicle_count):
        if vehicle_id:
            low, high = spec.spawn_interval
            frame += int(rng.integers(low, high + 1))
        road = spec.roads[int(rng.integers(len(spec.roads)))]
        speed = float(rng.uniform(*spec.speed_range))
        model = int(rng.integers(spec.appearance_models))
        classes = {}
        for attribute, count in sorted(spec.metadata_classes.items()):
            if attribute == "color":
                classes[attribute] = int(rng.integers(count))
            else:
                classes[attribute] = model % count
        vehicles.append(_Vehicle(vehicle_id, road, frame, speed, model, classes))
    return vehicles


def _latents(spec: ScenarioSpec, vehicles: Sequence[_Vehicle]) -> Dict[int, np.ndarray]:
    rng = _stream(spec.seed, "latents")
    prototypes = rng.normal(size=(spec.appearance_models, spec.embedding_dim))
    prototypes /= np.linalg.norm(prototypes, axis=1, keepdims=True)
    latents = {}
    for vehicle in vehicles:
        latent = prototypes[vehicle.model] + spec.appearance_spread * rng.normal(
            size=spec.embedding_dim
        )
        latents[vehicle.vehicle_id] = latent / np.linalg.norm(latent)
    return latents


def _box(camera: CameraSpec, center: Point, size: Tuple[float, float]) -> Box:
    x, y = camera.to_pixels(center)
    w, h = size[0] * camera.scale, size[1] * camera.scale
    return (x - w / 2.0, y - h / 2.0, w, h)


def _inside(camera: CameraSpec, box: Box) -> bool:
    return (
        box[0] >= 0
        and box[1] >= 0
        and box[0] + box[2] <= camera.width
        and box[1] + box[3] <= camera.height
    )


def _wheels(box: Box, direction: Point) -> WheelKeypoints:
    """Wheel contact points of a box driving in a world direction."""
    cx, cy = box[0] + box[2] / 2.0, box[1] + box[3] / 2.0
    dx, dy = direction
    # Left of the driving direction in image coordinates, y pointing down.
    nx, ny = dy, -dx
    half_base = WHEELBASE_RATIO * box[2] / 2.0
    half_track = TRACK_RATIO * box[3] / 2.0

    def point(along: float, across: float) -> Point:
        return (cx + along * dx + across * nx, cy + along * dy + across * ny)

    return WheelKeypoints(
        front_left=point(half_base, half_track),
        front_right=point(half_base, -half_track),
        back_left=point(-half_base, half_track),
        back_right=point(-half_base, -half_track),
    )


def generate(spec: ScenarioSpec) -> Scenario:
    """Generate a scenario.

    Args:
        spec: The scenario spec.

    Returns:
        The scenario. Detection frames are on the global clock.
    """
    vehicles = _spawn_vehicles(spec)
    latents = _latents(spec, vehicles)
    stops_by_road: Dict[int, List[StopSpec]] = {}
    for stop in sorted(spec.stops, key=lambda s: (s.road_id, s.position)):
        stops_by_road.setdefault(stop.road_id, []).append(stop)

    # camera -> frame -> [(vehicle_id, box, direction)]
    visible: Dict[int, Dict[int, List[Tuple[int, Box, Point]]]] = {
        c.camera_id: {} for c in spec.cameras
    }
    for vehicle in vehicles:
        stops = stops_by_road.get(vehicle.road.road_id, [])
        last_frame = vehicle.spawn + _travel_frames(vehicle, stops)
        for frame in range(vehicle.spawn, last_frame + 1):
            arc = _arc_at(vehicle, stops, frame)
            if arc is None or arc > vehicle.road.length:
                continue
            center, direction = vehicle.road.locate(arc)
            for camera in spec.cameras:
                # Cameras record from their frame offset on.
                if frame < camera.frame_offset:
                    continue
                box = _box(camera, center, spec.box_size)
                if _inside(camera, box):
                    visible[camera.camera_id].setdefault(frame, []).append(
                        (vehicle.vehicle_id, box, direction)
                    )

    scenario = Scenario(
        spec=spec,
        detections={},
        embeddings={},
        metadata={},
        keypoints={},
        ground_truth=[],
        transitions=[],
        latents=latents,
        vehicle_of={},
    )
    for camera in spec.cameras:
        _observe_camera(spec, camera, visible[camera.camera_id], vehicles, scenario)
    scenario.transitions = _true_transitions(scenario.ground_truth)
    logger.info(
        "generated {} vehicles, {} detections, {} transitions",
        len(vehicles),
        sum(len(d) for d in scenario.detections.values()),
        len(scenario.transitions),
    )
    return scenario


def _observe_camera(
    spec: ScenarioSpec,
    camera: CameraSpec,
    frames: Mapping[int, List[Tuple[int, Box, Point]]],
    vehicles: Sequence[_Vehicle],
    scenario: Scenario,
) -> None:
    """Draw one camera's detections, embeddings, metadata and keypoints."""
    camera_id = camera.camera_id
    noise = spec.noise
    detection_rng = _stream(spec.seed, f"detections/{camera_dir_name(camera_id)}")
    embedding_rng = _stream(spec.seed, f"embeddings/{camera_dir_name(camera_id)}")

    detections: List[Detection] = []
    keypoints: Dict[DetectionKey, WheelKeypoints] = {}
    for frame in sorted(frames):
        observed: List[Tuple[Box, Optional[int], Optional[Point]]] = []
        for vehicle_id, box, direction in sorted(frames[frame], key=lambda v: v[0]):
            scenario.ground_truth.append((camera_id, frame, vehicle_id + 1, box))
            missed = detection_rng.random() < noise.miss_rate
            jitter = detection_rng.normal(0.0, noise.sigma_box, size=4)
            if missed:
                continue
            observed.append((_jittered(box, jitter), vehicle_id, direction))
        if detection_rng.random() < noise.fp_rate:
            w, h = spec.box_size[0] * camera.scale, spec.box_size[1] * camera.scale
            x = float(detection_rng.uniform(0, camera.width - w))
            y = float(detection_rng.uniform(0, camera.height - h))
            observed.append(((x, y, w, h), None, None))
        observed.sort(key=lambda o: (o[0][0], o[0][1]))
        for det_index, (box, vehicle_id, direction) in enumerate(observed):
            detection = Detection(camera_id, frame, det_index, box)
            detections.append(detection)
            if vehicle_id is not None and direction is not None:
                scenario.vehicle_of[detection.key] = vehicle_id
                keypoints[detection.key] = _wheels(box, direction)

    rows = {}
    for detection in detections:
        vehicle_id = scenario.vehicle_of.get(detection.key)
        if vehicle_id is None:
            vector = embedding_rng.normal(size=spec.embedding_dim)
        else:
            vector = scenario.latents[vehicle_id] + embedding_rng.normal(
                0.0, noise.sigma_emb, size=spec.embedding_dim
            )
        rows[detection.key] = vector / np.linalg.norm(vector)

    attributes = {}
    by_vehicle = {v.vehicle_id: v for v in vehicles}
    for attribute, class_count in sorted(spec.metadata_classes.items()):
        rng = _stream(spec.seed, f"metadata_{attribute}/{camera_dir_name(camera_id)}")
        probabilities = {}
        for detection in detections:
            vehicle_id = scenario.vehicle_of.get(detection.key)
            if vehicle_id is None:
                label = int(rng.integers(class_count))
            else:
                label = by_vehicle[vehicle_id].classes[attribute]
                if rng.random() < noise.flip_rate:
                    shift = 1 + int(rng.integers(class_count - 1))
                    label = (label + shift) % class_count
            one_hot = np.zeros(class_count)
            one_hot[label] = 1.0
            probabilities[detection.key] = one_hot
        attributes[attribute] = AttributeTable(attribute, class_count, probabilities)

    scenario.detections[camera_id] = detections
    scenario.embeddings[camera_id] = EmbeddingTable(spec.embedding_dim, rows)
    scenario.metadata[camera_id] = MetadataTable(attributes)
    scenario.keypoints[camera_id] = keypoints


def _jittered(box: Box, jitter: np.ndarray) -> Box:
    return (
        box[0] + float(jitter[0]),
        box[1] + float(jitter[1]),
        max(MIN_BOX_SIDE, box[2] + float(jitter[2])),
        max(MIN_BOX_SIDE, box[3] + float(jitter[3])),
    )


def _true_transitions(
    ground_truth: Sequence[Tuple[int, int, int, Box]]
) -> List[TrueTransition]:
    """Consecutive camera appearances of every vehicle."""
    spans: Dict[int, Dict[int, List[int]]] = {}
    for camera_id, frame, global_id, _ in ground_truth:
        span = spans.setdefault(global_id, {}).setdefault(camera_id, [frame, frame])
        span[0] = min(span[0], frame)
        span[1] = max(span[1], frame)
    transitions = []
    for global_id in sorted(spans):
        visits = sorted(
            spans[global_id].items(), key=lambda item: (item[1][0], item[0])
        )
        for (source, source_span), (dest, dest_span) in zip(visits, visits[1:]):
            transitions.append(
                TrueTransition(
                    global_id - 1, source, dest, source_span[1], dest_span[0]
                )
            )
    return transitions


def true_links(transitions: Sequence[TrueTransition]) -> Dict[str, Any]:
    """Summarise true transitions per ordered camera pair."""
    grouped: Dict[Tuple[int, int], List[int]] = {}
    for transition in transitions:
        pair = (transition.source_camera, transition.dest_camera)
        grouped.setdefault(pair, []).append(transition.dt)
    return {
        "transitions": [
            {
                "vehicle_id": t.vehicle_id,
                "global_id": t.vehicle_id + 1,
                "source_camera": t.source_camera,
                "dest_camera": t.dest_camera,
                "source_frame": t.source_frame,
                "dest_frame": t.dest_frame,
                "dt": t.dt,
            }
            for t in transitions
        ],
        "links": [
            {
                "source_camera": source,
                "dest_camera": dest,
                "count": len(deltas),
                "dt_min": min(deltas),
                "dt_max": max(deltas),
            }
            for (source, dest), deltas in sorted(grouped.items())
        ],
    }


def write_scenario(scenario: Scenario, out_dir: Union[str, Path]) -> Path:
    """Write a scenario in the pipeline's input layout.

    Every camera gets a ``cNNN`` directory with ``detections.csv``,
    ``embeddings.csv``, one ``metadata_<attribute>.csv`` per attribute and
    ``keypoints.csv``. The ground truth goes to ``gt.csv``, the true
    transitions to ``true_links.json`` and the spec to ``spec.json``.

    Returns:
        The output directory.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for camera in scenario.spec.cameras:
        camera_id = camera.camera_id
        camera_dir = out / camera_dir_name(camera_id)
        offset = camera.frame_offset
        write_detections(
            camera_dir / "detections.csv", scenario.detections[camera_id], offset
        )
        write_embeddings(
            camera_dir / "embeddings.csv", scenario.embeddings[camera_id], offset
        )
        for name, table in sorted(scenario.metadata[camera_id].attributes.items()):
            write_metadata(camera_dir / f"metadata_{name}.csv", table, offset)
        write_keypoints(
            camera_dir / "keypoints.csv", scenario.keypoints[camera_id], offset
        )
    write_tracks(out / "gt.csv", scenario.ground_truth)
    (out / "true_links.json").write_text(
        json.dumps(true_links(scenario.transitions), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    (out / "spec.json").write_text(
        json.dumps(scenario.spec.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return out


def chain_scenario(
    seed: int = 0,
    camera_count: int = 4,
    vehicle_count: int = 20,
    noise: Optional[NoiseSpec] = None,
    stops: Sequence[Tuple[int, float, int]] = (),
    camera_gap: float = 400.0,
) -> ScenarioSpec:
    """Cameras side by side along one straight road, traffic flowing one way.

    Speeds vary little and vehicles start far enough apart that none overtakes
    another.

    Args:
        seed: The scenario seed.
        camera_count: The number of 1280x720 cameras.
        vehicle_count: The number of vehicles.
        noise: The observation noise. Defaults to :class:`NoiseSpec` defaults.
        stops: ``(camera_id, x, duration)`` stops, ``x`` in the camera's pixels.
        camera_gap: World distance between neighbouring fields of view.

    Returns:
        The spec.
    """
    validate_count(camera_count, "camera_count")
    margin, width, height = 200.0, 1280, 720
    cameras = tuple(
        CameraSpec(camera_id=k + 1, origin=(margin + k * (width + camera_gap), 0.0))
        for k in range(camera_count)
    )
    world_width = 2 * margin + camera_count * width + (camera_count - 1) * camera_gap
    road = RoadSpec(
        road_id=1, points=((0.0, height / 2.0), (world_width, height / 2.0))
    )
    by_id = {c.camera_id: c for c in cameras}
    stop_specs = []
    for camera_id, x, duration in stops:
        if camera_id not in by_id:
            raise ValidationError(f"stop in unknown camera {camera_id}")
        stop_specs.append(StopSpec(1, by_id[camera_id].origin[0] + x, duration))
    return ScenarioSpec(
        seed=seed,
        world_size=(world_width, float(height)),
        cameras=cameras,
        roads=(road,),
        vehicle_count=vehicle_count,
        speed_range=CHAIN_SPEED_RANGE,
        spawn_interval=CHAIN_SPAWN_INTERVAL,
        stops=tuple(stop_specs),
        noise=NoiseSpec() if noise is None else noise,
    )
