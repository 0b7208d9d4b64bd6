"""Parsers and writers for the pipeline's file formats.

All files are UTF-8 CSV with a period as decimal separator. Blank lines and
lines starting with ``#`` are ignored. Embedding and metadata files start with a
one-line ``key=value`` header. Frame numbers in per-camera files are local to
the camera and are shifted onto the global clock by a per-camera frame offset.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import (
    Dict,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from mtmct_tracker.errors import (
    CoverageError,
    DimensionError,
    ParseError,
    ValidationError,
)
from mtmct_tracker.geometry import Box, Point
from mtmct_tracker.utils import format_number

PathLike = Union[str, Path]
DetectionKey = Tuple[int, int, int]
# camera id -> identity -> frame ordered detections
TrackTable = Dict[int, Dict[int, List["Detection"]]]

PROBABILITY_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Detection:
    """One bounding box observed by one camera in one frame."""

    camera_id: int
    frame: int
    det_index: int
    box: Box
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in self.box):
            raise ValidationError(f"non-finite box {self.box}")
        if self.box[2] <= 0 or self.box[3] <= 0:
            raise ValidationError(f"non-positive box size {self.box[2]}x{self.box[3]}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} not in [0, 1]")

    @property
    def key(self) -> DetectionKey:
        """The unique ``(camera_id, frame, det_index)`` key."""
        return (self.camera_id, self.frame, self.det_index)


@dataclass(frozen=True)
class EmbeddingTable:
    """Appearance embeddings keyed by detection."""

    dim: int
    rows: Mapping[DetectionKey, np.ndarray]

    def vector(self, key: DetectionKey) -> np.ndarray:
        """Return the embedding of a detection.

        Raises:
            CoverageError: If the detection has no embedding.
        """
        try:
            return self.rows[key]
        except KeyError as exc:
            raise CoverageError(f"no embedding for detection {key}") from exc

    def stack(self, keys: Sequence[DetectionKey]) -> np.ndarray:
        """Return the embeddings of keys as an ``(n, dim)`` array."""
        if not keys:
            return np.zeros((0, self.dim))
        return np.vstack([self.vector(key) for key in keys])

    def merged(self, other: "EmbeddingTable") -> "EmbeddingTable":
        """Return a table holding the rows of both tables.

        Raises:
            DimensionError: If the tables have different dimensions.
        """
        if self.rows and other.rows and self.dim != other.dim:
            raise DimensionError(
                f"cannot merge embeddings of dimension {self.dim} and {other.dim}"
            )
        dim = self.dim if self.rows else other.dim
        return EmbeddingTable(dim=dim, rows={**self.rows, **other.rows})


@dataclass(frozen=True)
class AttributeTable:
    """Per-detection class probabilities of one metadata attribute."""

    attribute: str
    class_count: int
    rows: Mapping[DetectionKey, np.ndarray]

    def vector(self, key: DetectionKey) -> np.ndarray:
        """Return the probability vector of a detection.

        Raises:
            CoverageError: If the detection has no row.
        """
        try:
            return self.rows[key]
        except KeyError as exc:
            raise CoverageError(
                f"no {self.attribute} probabilities for detection {key}"
            ) from exc

    def merged(self, other: "AttributeTable") -> "AttributeTable":
        """Return a table holding the rows of both tables.

        Raises:
            ValidationError: If the attributes or class counts differ.
        """
        if (self.attribute, self.class_count) != (other.attribute, other.class_count):
            raise ValidationError(
                f"cannot merge {self.attribute}/{self.class_count} with "
                f"{other.attribute}/{other.class_count}"
            )
        return AttributeTable(
            attribute=self.attribute,
            class_count=self.class_count,
            rows={**self.rows, **other.rows},
        )


@dataclass(frozen=True)
class MetadataTable:
    """Metadata class probabilities for every attribute, keyed by name."""

    attributes: Mapping[str, AttributeTable]

    def merged(self, other: "MetadataTable") -> "MetadataTable":
        """Return a table with the rows of both tables, attribute by attribute."""
        attributes = dict(self.attributes)
        for name, table in other.attributes.items():
            attributes[name] = (
                attributes[name].merged(table) if name in attributes else table
            )
        return MetadataTable(attributes=attributes)


@dataclass(frozen=True)
class WheelKeypoints:
    """The four wheel contact points of a vehicle, in image coordinates."""

    front_left: Point
    front_right: Point
    back_left: Point
    back_right: Point


def _read_rows(path: PathLike) -> Iterator[Tuple[int, List[str]]]:
    """Yield (line number, fields) for every non-blank, non-comment line."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for line_number, fields in enumerate(csv.reader(handle), start=1):
            fields = [field.strip() for field in fields]
            if not fields or not any(fields) or fields[0].startswith("#"):
                continue
            yield line_number, fields


def _to_int(text: str, path: PathLike, line_number: int) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ParseError(
            f"expected an integer, got {text!r}", path, line_number
        ) from exc


def _to_float(text: str, path: PathLike, line_number: int) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ParseError(f"expected a number, got {text!r}", path, line_number) from exc


def _parse_header(
    fields: Sequence[str], path: PathLike, line_number: int
) -> Dict[str, str]:
    """Parse a ``key=value,key=value`` header line."""
    header: Dict[str, str] = {}
    for item in fields:
        key, sep, value = item.partition("=")
        if not sep:
            raise ParseError(
                f"expected key=value in header, got {item!r}", path, line_number
            )
        header[key.strip()] = value.strip()
    return header


def _check_coverage(
    rows: Mapping[DetectionKey, np.ndarray],
    detections: Sequence[Detection],
    what: str,
    path: PathLike,
) -> None:
    for detection in sorted(detections, key=lambda d: d.key):
        if detection.key not in rows:
            raise CoverageError(f"{path}: no {what} for detection {detection.key}")


def parse_detections(
    path: PathLike, camera_id: int, frame_offset: int = 0
) -> List[Detection]:
    """Parse a per-camera detection file.

    Each line is ``frame,det_index,x,y,w,h[,confidence]``; a missing confidence
    is read as 1.0.

    Args:
        path: The detection CSV.
        camera_id: The camera the file belongs to.
        frame_offset: Added to every local frame index.

    Raises:
        ParseError: If a line is malformed.
        ValidationError: If a box has a non-positive size or a
            ``(frame, det_index)`` pair repeats.

    Returns:
        The detections sorted by ``(frame, det_index)``.
    """
    detections: Dict[Tuple[int, int], Detection] = {}
    for line_number, fields in _read_rows(path):
        if len(fields) not in (6, 7):
            raise ParseError(
                f"expected 6 or 7 fields, got {len(fields)}", path, line_number
            )
        frame = _to_int(fields[0], path, line_number) + frame_offset
        det_index = _to_int(fields[1], path, line_number)
        box = tuple(_to_float(v, path, line_number) for v in fields[2:6])
        confidence = 1.0
        if len(fields) == 7:
            confidence = _to_float(fields[6], path, line_number)
        if (frame, det_index) in detections:
            raise ValidationError(
                f"{path}:{line_number}: duplicate detection "
                f"(frame={frame}, det_index={det_index})"
            )
        try:
            detections[(frame, det_index)] = Detection(
                camera_id,
                frame,
                det_index,
                (box[0], box[1], box[2], box[3]),
                confidence,
            )
        except ValidationError as exc:
            raise ValidationError(f"{path}:{line_number}: {exc}") from exc
    return [detections[key] for key in sorted(detections)]


def _parse_vector_rows(
    path: PathLike,
    camera_id: int,
    frame_offset: int,
    length: int,
) -> Tuple[Dict[str, str], Dict[DetectionKey, np.ndarray]]:
    """Parse a header line followed by ``frame,det_index,v1,...,vN`` rows."""
    rows: Dict[DetectionKey, np.ndarray] = {}
    header: Optional[Dict[str, str]] = None
    for line_number, fields in _read_rows(path):
        if header is None:
            header = _parse_header(fields, path, line_number)
            if length < 0:
                length = _header_int(header, "dim", path, line_number)
            continue
        if len(fields) < 2:
            raise ParseError("expected frame,det_index,values", path, line_number)
        key = (
            camera_id,
            _to_int(fields[0], path, line_number) + frame_offset,
            _to_int(fields[1], path, line_number),
        )
        values = np.array([_to_float(v, path, line_number) for v in fields[2:]])
        if values.shape[0] != length:
            raise DimensionError(
                f"{path}:{line_number}: expected {length} values, got {values.shape[0]}"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError(f"{path}:{line_number}: non-finite value")
        if key in rows:
            raise ValidationError(f"{path}:{line_number}: duplicate row for {key}")
        rows[key] = values
    if header is None:
        raise ParseError("missing header line", path, 1)
    return header, rows


def _header_int(
    header: Mapping[str, str], name: str, path: PathLike, line_number: int = 1
) -> int:
    if name not in header:
        raise ParseError(f"header lacks {name}=", path, line_number)
    value = _to_int(header[name], path, line_number)
    if value < 1:
        raise ValidationError(f"{path}: {name} must be positive but is {value}")
    return value


def _resolve_camera(camera_id: Optional[int], detections: Sequence[Detection]) -> int:
    if camera_id is not None:
        return camera_id
    cameras = {d.camera_id for d in detections}
    if len(cameras) > 1:
        raise ValidationError(f"detections span several cameras: {sorted(cameras)}")
    return cameras.pop() if cameras else 0


def parse_embeddings(
    path: PathLike,
    detections: Sequence[Detection],
    camera_id: Optional[int] = None,
    frame_offset: int = 0,
) -> EmbeddingTable:
    """Parse a per-camera embedding file.

    The header is ``dim=<D>``, then one ``frame,det_index,v1,...,vD`` row per
    detection.

    Args:
        path: The embedding CSV.
        detections: The detections that must all have an embedding.
        camera_id: The camera of the file, inferred from detections if omitted.
        frame_offset: Added to every local frame index.

    Raises:
        CoverageError: If a detection has no row.
        DimensionError: If a vector does not have ``dim`` entries.
        ValidationError: If an entry is not finite.

    Returns:
        The embedding table.
    """
    camera = _resolve_camera(camera_id, detections)
    header, rows = _parse_vector_rows(path, camera, frame_offset, -1)
    _check_coverage(rows, detections, "embedding", path)
    return EmbeddingTable(dim=_header_int(header, "dim", path), rows=rows)


def parse_metadata(
    path: PathLike,
    detections: Sequence[Detection],
    camera_id: Optional[int] = None,
    frame_offset: int = 0,
) -> AttributeTable:
    """Parse a per-camera metadata file for one attribute.

    The header is ``attribute=<name>,classes=<K>``, then one
    ``frame,det_index,p1,...,pK`` row per detection.

    Args:
        path: The metadata CSV.
        detections: The detections that must all have a row.
        camera_id: The camera of the file, inferred from detections if omitted.
        frame_offset: Added to every local frame index.

    Raises:
        CoverageError: If a detection has no row.
        DimensionError: If a row does not have ``classes`` entries.
        ValidationError: If a row is not a probability distribution.

    Returns:
        The attribute table.
    """
    camera = _resolve_camera(camera_id, detections)
    header: Optional[Dict[str, str]] = None
    header_line = 1
    for header_line, fields in _read_rows(path):
        header = _parse_header(fields, path, header_line)
        break
    if header is None or "attribute" not in header:
        raise ParseError("header lacks attribute=", path, header_line)
    class_count = _header_int(header, "classes", path, header_line)
    _, rows = _parse_vector_rows(path, camera, frame_offset, class_count)
    for key, probabilities in rows.items():
        off_simplex = abs(probabilities.sum() - 1.0) > PROBABILITY_TOLERANCE
        if np.any(probabilities < 0) or off_simplex:
            raise ValidationError(
                f"{path}: probabilities of {key} are not a distribution"
            )
    _check_coverage(rows, detections, f"{header['attribute']} probabilities", path)
    return AttributeTable(
        attribute=header["attribute"], class_count=class_count, rows=rows
    )


def parse_keypoints(
    path: PathLike, frame_offset: int = 0
) -> Dict[DetectionKey, WheelKeypoints]:
    """Parse wheel keypoints.

    Each line is ``camera_id,frame,det_index,xfl,yfl,xfr,yfr,xbl,ybl,xbr,ybr``.

    Args:
        path: The keypoint CSV.
        frame_offset: Added to every local frame index.

    Raises:
        ParseError: If a line is malformed.
        ValidationError: If a key repeats or a coordinate is not finite.

    Returns:
        Wheel keypoints keyed by detection.
    """
    keypoints: Dict[DetectionKey, WheelKeypoints] = {}
    for line_number, fields in _read_rows(path):
        if len(fields) != 11:
            raise ParseError(
                f"expected 11 fields, got {len(fields)}", path, line_number
            )
        key = (
            _to_int(fields[0], path, line_number),
            _to_int(fields[1], path, line_number) + frame_offset,
            _to_int(fields[2], path, line_number),
        )
        coords = [_to_float(v, path, line_number) for v in fields[3:]]
        if not all(math.isfinite(c) for c in coords):
            raise ValidationError(f"{path}:{line_number}: non-finite keypoint")
        if key in keypoints:
            raise ValidationError(
                f"{path}:{line_number}: duplicate keypoints for {key}"
            )
        keypoints[key] = WheelKeypoints(
            front_left=(coords[0], coords[1]),
            front_right=(coords[2], coords[3]),
            back_left=(coords[4], coords[5]),
            back_right=(coords[6], coords[7]),
        )
    return keypoints


def parse_track_file(path: PathLike) -> TrackTable:
    """Parse a ``camera_id,frame,id,x,y,w,h`` track file.

    The layout is shared by ground truth, single camera tracking output and
    predicted global tracks. The identity is stored as each detection's
    ``det_index``.

    Args:
        path: The track CSV.

    Raises:
        ParseError: If a line is malformed.
        ValidationError: If ``(camera_id, frame, id)`` repeats or a box is invalid.

    Returns:
        Detections per camera per identity, sorted by frame.
    """
    tracks: TrackTable = {}
    seen = set()
    for line_number, fields in _read_rows(path):
        if len(fields) != 7:
            raise ParseError(f"expected 7 fields, got {len(fields)}", path, line_number)
        camera_id, frame, identity = (_to_int(v, path, line_number) for v in fields[:3])
        x, y, w, h = (_to_float(v, path, line_number) for v in fields[3:])
        if (camera_id, frame, identity) in seen:
            raise ValidationError(
                f"{path}:{line_number}: duplicate row for camera {camera_id}, "
                f"frame {frame}, id {identity}"
            )
        seen.add((camera_id, frame, identity))
        try:
            detection = Detection(camera_id, frame, identity, (x, y, w, h))
        except ValidationError as exc:
            raise ValidationError(f"{path}:{line_number}: {exc}") from exc
        tracks.setdefault(camera_id, {}).setdefault(identity, []).append(detection)
    for per_identity in tracks.values():
        for detections in per_identity.values():
            detections.sort(key=lambda d: d.frame)
    return tracks


def parse_ground_truth(path: PathLike) -> Dict[int, Dict[int, List[Detection]]]:
    """Parse ground truth into per-identity, per-camera detection sequences.

    Args:
        path: The ``camera_id,frame,global_id,x,y,w,h`` CSV.

    Raises:
        ValidationError: If a global id appears twice in one camera frame.

    Returns:
        A map from global id to camera id to frame ordered detections.
    """
    by_identity: Dict[int, Dict[int, List[Detection]]] = {}
    for camera_id, per_identity in sorted(parse_track_file(path).items()):
        for identity, detections in sorted(per_identity.items()):
            by_identity.setdefault(identity, {})[camera_id] = detections
    return by_identity


def _write_rows(path: PathLike, rows: Iterable[Sequence[str]]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        for row in rows:
            writer.writerow(row)


def write_detections(
    path: PathLike, detections: Iterable[Detection], frame_offset: int = 0
) -> None:
    """Write detections as ``frame,det_index,x,y,w,h,confidence`` rows."""
    _write_rows(
        path,
        (
            [
                str(d.frame - frame_offset),
                str(d.det_index),
                *(format_number(v) for v in d.box),
                format_number(d.confidence),
            ]
            for d in sorted(detections, key=lambda d: (d.frame, d.det_index))
        ),
    )


def _vector_rows(
    header: List[str],
    rows: Mapping[DetectionKey, np.ndarray],
    frame_offset: int,
) -> Iterator[List[str]]:
    yield header
    for key in sorted(rows):
        _, frame, det_index = key
        yield [
            str(frame - frame_offset),
            str(det_index),
            *(format_number(v) for v in rows[key]),
        ]


def write_embeddings(
    path: PathLike, table: EmbeddingTable, frame_offset: int = 0
) -> None:
    """Write an embedding table with its ``dim=`` header."""
    _write_rows(path, _vector_rows([f"dim={table.dim}"], table.rows, frame_offset))


def write_metadata(
    path: PathLike, table: AttributeTable, frame_offset: int = 0
) -> None:
    """Write one attribute table with its ``attribute=,classes=`` header."""
    header = [f"attribute={table.attribute}", f"classes={table.class_count}"]
    _write_rows(path, _vector_rows(header, table.rows, frame_offset))


def write_keypoints(
    path: PathLike,
    keypoints: Mapping[DetectionKey, WheelKeypoints],
    frame_offset: int = 0,
) -> None:
    """Write wheel keypoints, one detection per row."""

    def rows() -> Iterator[List[str]]:
        for camera_id, frame, det_index in sorted(keypoints):
            wheels = keypoints[(camera_id, frame, det_index)]
            coords = (
                *wheels.front_left,
                *wheels.front_right,
                *wheels.back_left,
                *wheels.back_right,
            )
            yield [
                str(camera_id),
                str(frame - frame_offset),
                str(det_index),
                *(format_number(c) for c in coords),
            ]

    _write_rows(path, rows())


def write_tracks(path: PathLike, rows: Iterable[Tuple[int, int, int, Box]]) -> None:
    """Write ``camera_id,frame,id,x,y,w,h`` rows in canonical order."""
    _write_rows(
        path,
        (
            [
                str(camera_id),
                str(frame),
                str(identity),
                *(format_number(v) for v in box),
            ]
            for camera_id, frame, identity, box in sorted(
                rows, key=lambda row: (row[0], row[1], row[2])
            )
        ),
    )
