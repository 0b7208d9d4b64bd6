"""Identity and CLEAR-MOT scores of predicted tracks against ground truth.

Both inputs are track tables as read by
:func:`mtmct_tracker.ingest.parse_track_file`, where an identity may span
several cameras. A predicted box matches a ground-truth box of the same camera
and frame when their IOU is at least the evaluation threshold.
"""

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.optimize import linear_sum_assignment

from mtmct_tracker.constants import DEFAULT_EVAL_IOU
from mtmct_tracker.errors import ValidationError
from mtmct_tracker.geometry import Box, iou
from mtmct_tracker.ingest import TrackTable, _write_rows
from mtmct_tracker.utils import format_number

# pylint: disable=too-many-instance-attributes,too-many-locals

MOSTLY_TRACKED_RATIO = 0.8

# (camera_id, frame) -> identity -> box
_FrameIndex = Dict[Tuple[int, int], Dict[int, Box]]


@dataclass(frozen=True)
class EvalReport:
    """Identity and CLEAR-MOT scores of one evaluation."""

    idf1: float
    idp: float
    idr: float
    idtp: int
    idfp: int
    idfn: int
    mota: float
    motp: float
    recall: float
    mt: int
    iou_threshold: float
    false_positives: int = 0
    false_negatives: int = 0
    id_switches: int = 0
    gt_boxes: int = 0
    gt_identities: int = 0

    def to_dict(self) -> Dict[str, float]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class IdentityScores:
    """The identity part of an evaluation."""

    idf1: float
    idp: float
    idr: float
    idtp: int
    idfp: int
    idfn: int


@dataclass(frozen=True)
class ClearMotScores:
    """The CLEAR-MOT part of an evaluation."""

    mota: float
    motp: float
    recall: float
    mt: int
    false_positives: int
    false_negatives: int
    id_switches: int
    gt_boxes: int
    gt_identities: int


def _frame_index(tracks: TrackTable) -> _FrameIndex:
    index: _FrameIndex = {}
    for camera_id, identities in tracks.items():
        for identity, detections in identities.items():
            for detection in detections:
                frame_key = (camera_id, detection.frame)
                index.setdefault(frame_key, {})[identity] = detection.box
    return index


def _box_count(tracks: TrackTable) -> Dict[int, int]:
    counts: Dict[int, int] = {}
    for identities in tracks.values():
        for identity, detections in identities.items():
            counts[identity] = counts.get(identity, 0) + len(detections)
    return counts


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


def idf1(
    predicted: TrackTable,
    ground_truth: TrackTable,
    iou_threshold: float = DEFAULT_EVAL_IOU,
) -> IdentityScores:
    """Compute IDF1, IDP and IDR.

    Ground-truth and predicted identities are matched one to one so that the
    number of frames in which matched identities have overlapping boxes is as
    large as possible. Those frames are the identity true positives; every
    other ground-truth box is a false negative and every other predicted box a
    false positive.

    Args:
        predicted: The predicted tracks.
        ground_truth: The ground-truth tracks.
        iou_threshold: The IOU a box pair needs to match.

    Returns:
        The identity scores. Ratios with a zero denominator are 0.
    """
    gt_counts = _box_count(ground_truth)
    pred_counts = _box_count(predicted)
    gt_ids = sorted(gt_counts)
    pred_ids = sorted(pred_counts)
    gt_row = {identity: row for row, identity in enumerate(gt_ids)}
    pred_col = {identity: col for col, identity in enumerate(pred_ids)}

    matches = np.zeros((len(gt_ids), len(pred_ids)))
    gt_index = _frame_index(ground_truth)
    pred_index = _frame_index(predicted)
    for frame_key, gt_boxes in gt_index.items():
        pred_boxes = pred_index.get(frame_key)
        if not pred_boxes:
            continue
        for gt_id, gt_box in gt_boxes.items():
            for pred_id, pred_box in pred_boxes.items():
                if iou(gt_box, pred_box) >= iou_threshold:
                    matches[gt_row[gt_id], pred_col[pred_id]] += 1

    idtp = 0
    if matches.size:
        rows, cols = linear_sum_assignment(-matches)
        idtp = int(matches[rows, cols].sum())
    total_gt = sum(gt_counts.values())
    total_pred = sum(pred_counts.values())
    idfn = total_gt - idtp
    idfp = total_pred - idtp
    return IdentityScores(
        idf1=_ratio(2 * idtp, 2 * idtp + idfp + idfn),
        idp=_ratio(idtp, idtp + idfp),
        idr=_ratio(idtp, idtp + idfn),
        idtp=idtp,
        idfp=idfp,
        idfn=idfn,
    )


def _match_frame(
    gt_boxes: Mapping[int, Box],
    pred_boxes: Mapping[int, Box],
    previous: Mapping[int, int],
    iou_threshold: float,
) -> Dict[int, Tuple[int, float]]:
    """Match one frame, keeping last frame's matches where they still hold."""
    matched: Dict[int, Tuple[int, float]] = {}
    used = set()
    for gt_id in sorted(gt_boxes):
        pred_id = previous.get(gt_id)
        if pred_id is None or pred_id not in pred_boxes or pred_id in used:
            continue
        overlap = iou(gt_boxes[gt_id], pred_boxes[pred_id])
        if overlap >= iou_threshold:
            matched[gt_id] = (pred_id, overlap)
            used.add(pred_id)
    candidates = sorted(
        (-iou(gt_boxes[g], pred_boxes[p]), g, p)
        for g in gt_boxes
        if g not in matched
        for p in pred_boxes
        if p not in used
    )
    for negative_overlap, gt_id, pred_id in candidates:
        if -negative_overlap < iou_threshold:
            break
        if gt_id in matched or pred_id in used:
            continue
        matched[gt_id] = (pred_id, -negative_overlap)
        used.add(pred_id)
    return matched


def clear_mot(
    predicted: TrackTable,
    ground_truth: TrackTable,
    iou_threshold: float = DEFAULT_EVAL_IOU,
) -> ClearMotScores:
    """Compute MOTA, MOTP, recall and the number of mostly tracked identities.

    Frames are matched camera by camera in time order. A ground-truth identity
    keeps its previous predicted identity whenever the boxes still overlap
    enough; the remaining boxes are matched greedily by decreasing IOU. An
    identity switch is counted when a ground-truth identity is matched to a
    different predicted identity than at its last match in the same camera.
    """
    gt_index = _frame_index(ground_truth)
    pred_index = _frame_index(predicted)
    gt_counts = _box_count(ground_truth)
    matched_counts: Dict[int, int] = {}
    last_match: Dict[Tuple[int, int], int] = {}
    false_positives = false_negatives = switches = 0
    overlaps: List[float] = []

    for frame_key in sorted(set(gt_index) | set(pred_index)):
        camera_id = frame_key[0]
        gt_boxes = gt_index.get(frame_key, {})
        pred_boxes = pred_index.get(frame_key, {})
        previous = {
            gt_id: last_match[(camera_id, gt_id)]
            for gt_id in gt_boxes
            if (camera_id, gt_id) in last_match
        }
        matched = _match_frame(gt_boxes, pred_boxes, previous, iou_threshold)
        for gt_id, (pred_id, overlap) in matched.items():
            if previous.get(gt_id, pred_id) != pred_id:
                switches += 1
            last_match[(camera_id, gt_id)] = pred_id
            matched_counts[gt_id] = matched_counts.get(gt_id, 0) + 1
            overlaps.append(overlap)
        false_negatives += len(gt_boxes) - len(matched)
        false_positives += len(pred_boxes) - len(matched)

    gt_total = sum(gt_counts.values())
    errors = false_negatives + false_positives + switches
    mostly_tracked = sum(
        1
        for gt_id, count in gt_counts.items()
        if matched_counts.get(gt_id, 0) >= MOSTLY_TRACKED_RATIO * count
    )
    return ClearMotScores(
        mota=1.0 - errors / gt_total if gt_total else 0.0,
        motp=float(np.mean(overlaps)) if overlaps else 0.0,
        recall=_ratio(len(overlaps), gt_total),
        mt=mostly_tracked,
        false_positives=false_positives,
        false_negatives=false_negatives,
        id_switches=switches,
        gt_boxes=gt_total,
        gt_identities=len(gt_counts),
    )


def check_cameras(predicted: TrackTable, ground_truth: TrackTable) -> None:
    """Make sure every predicted camera has ground truth.

    Raises:
        ValidationError: Listing the predicted cameras missing from the ground
            truth.
    """
    extra = sorted(set(predicted) - set(ground_truth))
    if extra:
        raise ValidationError(
            "predictions contain cameras without ground truth: "
            + ", ".join(str(c) for c in extra)
        )


def evaluate(
    predicted: TrackTable,
    ground_truth: TrackTable,
    iou_threshold: float = DEFAULT_EVAL_IOU,
) -> EvalReport:
    """Compute the full evaluation report.

    Raises:
        ValidationError: If the predictions name cameras the ground truth lacks
            or the threshold is not in (0, 1).
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValidationError(
            f"IOU threshold must be in (0, 1) but is {iou_threshold}"
        )
    check_cameras(predicted, ground_truth)
    identity = idf1(predicted, ground_truth, iou_threshold)
    mot = clear_mot(predicted, ground_truth, iou_threshold)
    logger.info("IDF1 {:.4f}, MOTA {:.4f}", identity.idf1, mot.mota)
    return EvalReport(
        idf1=identity.idf1,
        idp=identity.idp,
        idr=identity.idr,
        idtp=identity.idtp,
        idfp=identity.idfp,
        idfn=identity.idfn,
        mota=mot.mota,
        motp=mot.motp,
        recall=mot.recall,
        mt=mot.mt,
        iou_threshold=iou_threshold,
        false_positives=mot.false_positives,
        false_negatives=mot.false_negatives,
        id_switches=mot.id_switches,
        gt_boxes=mot.gt_boxes,
        gt_identities=mot.gt_identities,
    )


def evaluate_per_camera(
    predicted: TrackTable,
    ground_truth: TrackTable,
    iou_threshold: float = DEFAULT_EVAL_IOU,
) -> Dict[int, EvalReport]:
    """Evaluate every ground-truth camera on its own."""
    check_cameras(predicted, ground_truth)
    return {
        camera_id: evaluate(
            {camera_id: predicted[camera_id]} if camera_id in predicted else {},
            {camera_id: ground_truth[camera_id]},
            iou_threshold,
        )
        for camera_id in sorted(ground_truth)
    }


PER_CAMERA_COLUMNS: Sequence[str] = (
    "idf1",
    "idp",
    "idr",
    "idtp",
    "idfp",
    "idfn",
    "mota",
    "motp",
    "recall",
    "mt",
)


def write_per_camera_csv(
    path: Union[str, Path], reports: Mapping[int, EvalReport]
) -> None:
    """Write one row of scores per camera under a header row."""
    rows: List[List[str]] = [["camera_id", *PER_CAMERA_COLUMNS]]
    for camera_id in sorted(reports):
        scores = reports[camera_id].to_dict()
        rows.append(
            [str(camera_id), *(format_number(scores[c]) for c in PER_CAMERA_COLUMNS)]
        )
    _write_rows(path, rows)
