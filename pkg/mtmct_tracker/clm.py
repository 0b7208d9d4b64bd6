"""Trajectory-based camera link model.

A trajectory is summarised by the zone pair, an entry zone and an exit zone,
that best explains which zones it passed through. A camera link connects the
exit zone of a zone pair in one camera with the entry zone of a zone pair in
another, together with the window of transition times seen in training.
"""

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from mtmct_tracker.config import PipelineConfig
from mtmct_tracker.constants import DEFAULT_MAX_PAIR_DISTANCE
from mtmct_tracker.errors import ValidationError
from mtmct_tracker.geometry import overlap_ratio
from mtmct_tracker.ingest import Detection
from mtmct_tracker.sct import Trajectory, TrajectoryKey, ZoneVisit
from mtmct_tracker.zones import Zone, ZoneClass, build_zones

# pylint: disable=too-many-locals

PairKey = Tuple[int, int]

ENTRY_CLASSES = (ZoneClass.ENTRY,)
EXIT_CLASSES = (ZoneClass.EXIT,)


@dataclass(frozen=True)
class ZonePair:
    """An ordered (entry zone, exit zone) combination of one camera."""

    camera_id: int
    pair_id: int
    entry_zone_id: int
    exit_zone_id: int

    @property
    def key(self) -> PairKey:
        """The ``(camera_id, pair_id)`` key."""
        return (self.camera_id, self.pair_id)


@dataclass(frozen=True)
class CameraLink:
    """A learned transition from a zone pair of one camera to one of another."""

    source_camera: int
    source_pair: int
    source_zone: int
    dest_camera: int
    dest_pair: int
    dest_zone: int
    dt_min: int
    dt_max: int
    sample_count: int

    def __post_init__(self) -> None:
        if self.dt_min > self.dt_max:
            raise ValidationError(
                f"link window ({self.dt_min}, {self.dt_max}) is empty"
            )

    @property
    def source_key(self) -> PairKey:
        return (self.source_camera, self.source_pair)

    @property
    def dest_key(self) -> PairKey:
        return (self.dest_camera, self.dest_pair)

    def contains(self, delta: int) -> bool:
        """Whether a transition time falls inside the window."""
        return self.dt_min <= delta <= self.dt_max


@dataclass(frozen=True)
class Transition:
    """The link a cross-camera pair travels on and its crossing frames."""

    link_index: int
    source_frame: int
    dest_frame: int

    @property
    def delta(self) -> int:
        return self.dest_frame - self.source_frame


class CameraLinkModel:
    """The zones, zone pairs and links learned for a camera network.

    Instances are not modified after construction and may be shared between
    threads.
    """

    def __init__(
        self,
        zones: Mapping[int, Sequence[Zone]],
        zone_pairs: Mapping[int, Sequence[ZonePair]],
        links: Sequence[CameraLink],
    ) -> None:
        self.zones: Dict[int, Tuple[Zone, ...]] = {
            camera_id: tuple(sorted(camera_zones, key=lambda z: z.zone_id))
            for camera_id, camera_zones in sorted(zones.items())
        }
        self.zone_pairs: Dict[int, Tuple[ZonePair, ...]] = {
            camera_id: tuple(sorted(pairs, key=lambda p: p.pair_id))
            for camera_id, pairs in sorted(zone_pairs.items())
        }
        self.links: Tuple[CameraLink, ...] = tuple(
            sorted(links, key=lambda link: (link.source_key, link.dest_key))
        )
        self._link_index: Dict[Tuple[PairKey, PairKey], int] = {}
        for index, link in enumerate(self.links):
            link_key = (link.source_key, link.dest_key)
            if link_key in self._link_index:
                raise ValidationError(
                    f"duplicate link from pair {link.source_key} to {link.dest_key}"
                )
            self._link_index[link_key] = index
        self._pairs: Dict[PairKey, ZonePair] = {
            pair.key: pair for pairs in self.zone_pairs.values() for pair in pairs
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CameraLinkModel):
            return NotImplemented
        return (self.zones, self.zone_pairs, self.links) == (
            other.zones,
            other.zone_pairs,
            other.links,
        )

    __hash__ = None  # type: ignore[assignment]

    def camera_zones(self, camera_id: int) -> Tuple[Zone, ...]:
        """Return the zones of a camera, empty if the camera is unknown."""
        return self.zones.get(camera_id, ())

    def camera_pairs(self, camera_id: int) -> Tuple[ZonePair, ...]:
        """Return the zone pairs of a camera, empty if the camera is unknown."""
        return self.zone_pairs.get(camera_id, ())

    def pair(self, key: PairKey) -> ZonePair:
        """Return the zone pair with the given ``(camera_id, pair_id)`` key.

        Raises:
            ValidationError: If there is no such pair.
        """
        try:
            return self._pairs[key]
        except KeyError as exc:
            raise ValidationError(f"unknown zone pair {key}") from exc

    def link_between(self, source: PairKey, dest: PairKey) -> Optional[int]:
        """Return the index of the link from source to dest, if there is one."""
        return self._link_index.get((source, dest))

    def to_dict(self) -> Dict[str, object]:
        """Convert the model to a JSON compatible dictionary."""
        return {
            "zones": [
                {
                    "camera_id": z.camera_id,
                    "zone_id": z.zone_id,
                    "class": z.zone_class.value,
                    "bbox": list(z.bbox),
                    "n_entry": z.n_entry,
                    "n_exit": z.n_exit,
                }
                for camera_zones in self.zones.values()
                for z in camera_zones
            ],
            "zone_pairs": [
                {
                    "camera_id": p.camera_id,
                    "pair_id": p.pair_id,
                    "entry_zone_id": p.entry_zone_id,
                    "exit_zone_id": p.exit_zone_id,
                }
                for pairs in self.zone_pairs.values()
                for p in pairs
            ],
            "links": [
                {
                    "source": {
                        "camera_id": l.source_camera,
                        "pair_id": l.source_pair,
                        "zone_id": l.source_zone,
                    },
                    "dest": {
                        "camera_id": l.dest_camera,
                        "pair_id": l.dest_pair,
                        "zone_id": l.dest_zone,
                    },
                    "dt_min": l.dt_min,
                    "dt_max": l.dt_max,
                    "sample_count": l.sample_count,
                }
                for l in self.links
            ],
        }

    @classmethod
    def from_dict(cls, document: Mapping[str, object]) -> "CameraLinkModel":
        """Build a model from :meth:`to_dict` output.

        Raises:
            ValidationError: If a field is missing or has the wrong type.
        """
        try:
            zones: Dict[int, List[Zone]] = {}
            for item in document["zones"]:  # type: ignore[union-attr]
                zone = Zone(
                    camera_id=int(item["camera_id"]),
                    zone_id=int(item["zone_id"]),
                    bbox=tuple(
                        float(v) for v in item["bbox"]  # type: ignore[arg-type]
                    ),
                    n_entry=int(item["n_entry"]),
                    n_exit=int(item["n_exit"]),
                    zone_class=ZoneClass(item["class"]),
                )
                zones.setdefault(zone.camera_id, []).append(zone)
            pairs: Dict[int, List[ZonePair]] = {}
            for item in document["zone_pairs"]:  # type: ignore[union-attr]
                pair = ZonePair(
                    camera_id=int(item["camera_id"]),
                    pair_id=int(item["pair_id"]),
                    entry_zone_id=int(item["entry_zone_id"]),
                    exit_zone_id=int(item["exit_zone_id"]),
                )
                pairs.setdefault(pair.camera_id, []).append(pair)
            links = [
                CameraLink(
                    source_camera=int(item["source"]["camera_id"]),
                    source_pair=int(item["source"]["pair_id"]),
                    source_zone=int(item["source"]["zone_id"]),
                    dest_camera=int(item["dest"]["camera_id"]),
                    dest_pair=int(item["dest"]["pair_id"]),
                    dest_zone=int(item["dest"]["zone_id"]),
                    dt_min=int(item["dt_min"]),
                    dt_max=int(item["dt_max"]),
                    sample_count=int(item["sample_count"]),
                )
                for item in document["links"]  # type: ignore[union-attr]
            ]
        except ValidationError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed camera link model: {exc!r}") from exc
        return cls(zones, pairs, links)

    def write_json(self, path: Union[str, Path]) -> None:
        """Write the model as indented JSON."""
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "CameraLinkModel":
        """Load a model written by :meth:`write_json`.

        Raises:
            ValidationError: If the file is not a valid model.
        """
        try:
            document = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(document, dict):
            raise ValidationError(f"{path} must contain a JSON object")
        return cls.from_dict(document)


def enumerate_zone_pairs(
    zones: Sequence[Zone], traffic_aware_pairs: bool = False
) -> List[ZonePair]:
    """Form every (entry zone, exit zone) combination of one camera.

    Args:
        zones: The zones of a single camera.
        traffic_aware_pairs: Also use traffic-aware zones on either side.

    Returns:
        The pairs, numbered from 1 in order of entry zone then exit zone.
    """
    extra = (ZoneClass.TRAFFIC_AWARE,) if traffic_aware_pairs else ()
    entry_classes = ENTRY_CLASSES + extra
    exit_classes = EXIT_CLASSES + extra
    entries = sorted(z.zone_id for z in zones if z.zone_class in entry_classes)
    exits = sorted(z.zone_id for z in zones if z.zone_class in exit_classes)
    if not zones:
        return []
    combinations = [(e, x) for e in entries for x in exits if e != x]
    camera_id = zones[0].camera_id
    return [
        ZonePair(camera_id, pair_id, entry_zone_id, exit_zone_id)
        for pair_id, (entry_zone_id, exit_zone_id) in enumerate(combinations, start=1)
    ]


def zone_visits(trajectory: Trajectory, zones: Sequence[Zone]) -> Tuple[ZoneVisit, ...]:
    """Measure how strongly a trajectory passed through each zone.

    A zone's overlap ratio is the largest share of a box of the trajectory that
    lies inside the zone. Zones the trajectory never overlaps are left out.

    Returns:
        The visits, ordered by the first overlapping frame.
    """
    visits = []
    for zone in zones:
        ratios = [
            (overlap_ratio(d.box, zone.bbox), d.frame) for d in trajectory.detections
        ]
        frames = [frame for ratio, frame in ratios if ratio > 0.0]
        if not frames:
            continue
        visits.append(
            ZoneVisit(
                zone_id=zone.zone_id,
                alpha=max(ratio for ratio, _ in ratios),
                first_frame=frames[0],
                last_frame=frames[-1],
            )
        )
    return tuple(sorted(visits, key=lambda v: (v.first_frame, v.zone_id)))


def zone_pair_distance(pair: ZonePair, visits: Sequence[ZoneVisit]) -> float:
    """Distance between a zone pair and the zones a trajectory went through.

    The distance is ``sum |1(z in pair) - alpha_z|`` over the zones of the pair
    and the visited zones, ``alpha_z`` being 0 for an unvisited zone. It is
    infinite when the trajectory reached the pair's exit zone before its entry
    zone.

    Raises:
        ValidationError: If an overlap ratio is outside [0, 1].
    """
    alphas: Dict[int, float] = {}
    first_frames: Dict[int, int] = {}
    for visit in visits:
        if not 0.0 <= visit.alpha <= 1.0:
            raise ValidationError(
                f"overlap ratio {visit.alpha} of zone {visit.zone_id} not in [0, 1]"
            )
        # Only the first visit of a zone counts.
        if visit.zone_id not in alphas:
            alphas[visit.zone_id] = visit.alpha
            first_frames[visit.zone_id] = visit.first_frame
    if (
        pair.entry_zone_id in first_frames
        and pair.exit_zone_id in first_frames
        and first_frames[pair.entry_zone_id] > first_frames[pair.exit_zone_id]
    ):
        return math.inf
    members = {pair.entry_zone_id, pair.exit_zone_id}
    return sum(
        abs((1.0 if zone_id in members else 0.0) - alphas.get(zone_id, 0.0))
        for zone_id in sorted(members | set(alphas))
    )


def assign_zone_pair(
    trajectory: Trajectory,
    zone_pairs: Sequence[ZonePair],
    zones: Sequence[Zone],
    max_pair_distance: float = DEFAULT_MAX_PAIR_DISTANCE,
) -> Optional[int]:
    """Return the id of the zone pair closest to a trajectory.

    Ties go to the lowest pair id. Returns None when there are no pairs or the
    closest one is infinitely or further than ``max_pair_distance`` away.
    """
    visits = zone_visits(trajectory, zones)
    best = min(
        ((zone_pair_distance(pair, visits), pair.pair_id) for pair in zone_pairs),
        default=None,
    )
    if best is None or not best[0] <= max_pair_distance:
        return None
    return best[1]


def annotate_zone_pair(
    trajectory: Trajectory,
    zone_pairs: Sequence[ZonePair],
    zones: Sequence[Zone],
    max_pair_distance: float = DEFAULT_MAX_PAIR_DISTANCE,
) -> Trajectory:
    """Return the trajectory with its zone visits and zone pair filled in."""
    return replace(
        trajectory,
        zone_pair=assign_zone_pair(trajectory, zone_pairs, zones, max_pair_distance),
        zone_visits=zone_visits(trajectory, zones),
    )


def _crossing_frames(
    source: Trajectory, dest: Trajectory, source_zone: int, dest_zone: int
) -> Tuple[int, int]:
    """Frame source leaves its transition zone and frame dest enters its own."""
    exit_visit = source.visit(source_zone)
    entry_visit = dest.visit(dest_zone)
    source_frame = source.last_frame if exit_visit is None else exit_visit.last_frame
    dest_frame = dest.first_frame if entry_visit is None else entry_visit.first_frame
    return source_frame, dest_frame


def transition_frames(
    source: Trajectory, dest: Trajectory, model: CameraLinkModel
) -> Optional[Transition]:
    """Return the link from source to dest and their crossing frames.

    Returns:
        None when either trajectory has no zone pair or no link joins the pairs.
    """
    if source.zone_pair is None or dest.zone_pair is None:
        return None
    link_index = model.link_between(
        (source.camera_id, source.zone_pair), (dest.camera_id, dest.zone_pair)
    )
    if link_index is None:
        return None
    link = model.links[link_index]
    source_frame, dest_frame = _crossing_frames(
        source, dest, link.source_zone, link.dest_zone
    )
    return Transition(link_index, source_frame, dest_frame)


def valid_transition(
    source: Trajectory, dest: Trajectory, model: CameraLinkModel
) -> bool:
    """Whether dest can follow source on a learned link within its window."""
    transition = transition_frames(source, dest, model)
    if transition is None:
        return False
    return model.links[transition.link_index].contains(transition.delta)


def _sign(value: int) -> int:
    return (value > 0) - (value < 0)


def order_consistent(
    match_a: Tuple[Trajectory, Trajectory],
    match_b: Tuple[Trajectory, Trajectory],
    model: CameraLinkModel,
) -> bool:
    """Whether two matches on the same link keep their order.

    Vehicles leaving the source camera in some order must reach the destination
    camera in the same order. Matches on different links, or not on any link,
    never conflict.
    """
    transition_a = transition_frames(match_a[0], match_a[1], model)
    transition_b = transition_frames(match_b[0], match_b[1], model)
    if transition_a is None or transition_b is None:
        return True
    return transitions_consistent(transition_a, transition_b)


def transitions_consistent(transition_a: Transition, transition_b: Transition) -> bool:
    """Whether two transitions keep their order, always true across links."""
    if transition_a.link_index != transition_b.link_index:
        return True
    return _sign(transition_a.source_frame - transition_b.source_frame) == _sign(
        transition_a.dest_frame - transition_b.dest_frame
    )


def learn_links(
    trajectories: Sequence[Trajectory],
    global_ids: Mapping[TrajectoryKey, int],
    zone_pairs: Mapping[int, Sequence[ZonePair]],
    config: PipelineConfig,
) -> List[CameraLink]:
    """Learn camera links and their transition-time windows.

    For every vehicle seen in camera s and next in camera d, the transition
    time runs from the frame it leaves the exit zone of its pair in s to the
    frame it enters the entry zone of its pair in d. Samples are grouped by
    (source pair, destination pair); groups with at least ``min_link_samples``
    become links whose window spans the configured percentiles, widened by
    ``window_padding`` frames on each side.

    Args:
        trajectories: Training trajectories annotated with zone pairs and zone
            visits.
        global_ids: The ground-truth identity of every trajectory.
        zone_pairs: The zone pairs of every camera.
        config: The pipeline configuration.

    Returns:
        The links, ordered by source pair then destination pair.
    """
    pairs = {
        pair.key: pair for camera_pairs in zone_pairs.values() for pair in camera_pairs
    }
    unassigned = sum(1 for t in trajectories if t.zone_pair is None)
    if unassigned:
        logger.warning("{} training trajectories have no zone pair", unassigned)

    by_identity: Dict[int, List[Trajectory]] = {}
    for trajectory in trajectories:
        by_identity.setdefault(global_ids[trajectory.key], []).append(trajectory)

    samples: Dict[Tuple[PairKey, PairKey], List[int]] = {}
    for identity in sorted(by_identity):
        appearances = sorted(
            by_identity[identity], key=lambda t: (t.first_frame, t.camera_id)
        )
        for source, dest in zip(appearances, appearances[1:]):
            if source.camera_id == dest.camera_id:
                continue
            if source.zone_pair is None or dest.zone_pair is None:
                continue
            source_pair = pairs[(source.camera_id, source.zone_pair)]
            dest_pair = pairs[(dest.camera_id, dest.zone_pair)]
            source_frame, dest_frame = _crossing_frames(
                source, dest, source_pair.exit_zone_id, dest_pair.entry_zone_id
            )
            samples.setdefault((source_pair.key, dest_pair.key), []).append(
                dest_frame - source_frame
            )

    low, high = config.window_percentiles
    links = []
    for (source_key, dest_key), deltas in sorted(samples.items()):
        if len(deltas) < config.min_link_samples:
            logger.debug(
                "pair {} -> {}: {} samples, no link", source_key, dest_key, len(deltas)
            )
            continue
        lower, upper = np.percentile(np.asarray(deltas, dtype=float), [low, high])
        links.append(
            CameraLink(
                source_camera=source_key[0],
                source_pair=source_key[1],
                source_zone=pairs[source_key].exit_zone_id,
                dest_camera=dest_key[0],
                dest_pair=dest_key[1],
                dest_zone=pairs[dest_key].entry_zone_id,
                dt_min=int(math.floor(lower)) - config.window_padding,
                dt_max=int(math.ceil(upper)) + config.window_padding,
                sample_count=len(deltas),
            )
        )
    logger.info(
        "learned {} camera links from {} samples",
        len(links),
        sum(len(deltas) for deltas in samples.values()),
    )
    return links


def train_model(
    ground_truth: Mapping[int, Mapping[int, Sequence[Detection]]],
    config: PipelineConfig,
) -> CameraLinkModel:
    """Build zones, zone pairs and links from ground-truth tracks.

    Args:
        ground_truth: Global identity mapped to per-camera detections, as
            returned by :func:`mtmct_tracker.ingest.parse_ground_truth`.
        config: The pipeline configuration.

    Returns:
        The trained model.
    """
    per_camera: Dict[int, List[Trajectory]] = {}
    for identity in sorted(ground_truth):
        for camera_id, detections in sorted(ground_truth[identity].items()):
            per_camera.setdefault(camera_id, []).append(
                Trajectory(
                    camera_id=camera_id,
                    local_id=identity,
                    detections=tuple(detections),
                )
            )

    zones: Dict[int, List[Zone]] = {}
    zone_pairs: Dict[int, List[ZonePair]] = {}
    annotated: List[Trajectory] = []
    for camera_id, camera_trajectories in sorted(per_camera.items()):
        zones[camera_id] = build_zones(camera_trajectories, config)
        zone_pairs[camera_id] = enumerate_zone_pairs(
            zones[camera_id], config.traffic_aware_pairs
        )
        annotated.extend(
            annotate_zone_pair(
                t, zone_pairs[camera_id], zones[camera_id], config.max_pair_distance
            )
            for t in camera_trajectories
        )

    global_ids = {t.key: t.local_id for t in annotated}
    links = learn_links(annotated, global_ids, zone_pairs, config)
    return CameraLinkModel(zones, zone_pairs, links)
