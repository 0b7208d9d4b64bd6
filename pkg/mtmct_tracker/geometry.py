"""Box and vector geometry shared by the tracking stages.

Boxes are ``(x, y, w, h)`` tuples in pixels, ``(x, y)`` being the top-left
corner.
"""

from typing import Sequence, Tuple

import numpy as np

Box = Tuple[float, float, float, float]
Point = Tuple[float, float]


def box_area(box: Box) -> float:
    """Return the area of a box."""
    return box[2] * box[3]


def box_center(box: Box) -> Point:
    """Return the centre point of a box."""
    return (box[0] + box[2] / 2.0, box[1] + box[3] / 2.0)


def intersection_area(box_a: Box, box_b: Box) -> float:
    """Return the area shared by two boxes, 0 when they are disjoint."""
    left = max(box_a[0], box_b[0])
    top = max(box_a[1], box_b[1])
    right = min(box_a[0] + box_a[2], box_b[0] + box_b[2])
    bottom = min(box_a[1] + box_a[3], box_b[1] + box_b[3])
    if right <= left or bottom <= top:
        return 0.0
    return (right - left) * (bottom - top)


def iou(box_a: Box, box_b: Box) -> float:
    """Intersection over union of two boxes with positive width and height.

    Args:
        box_a: The first box.
        box_b: The second box.

    Returns:
        ``area(A ∩ B) / area(A ∪ B)``, a value in [0, 1].
    """
    inter = intersection_area(box_a, box_b)
    if inter == 0.0:
        return 0.0
    return inter / (box_area(box_a) + box_area(box_b) - inter)


def overlap_ratio(box: Box, region: Box) -> float:
    """Return the fraction of box's area that lies inside region, at most 1."""
    return min(1.0, intersection_area(box, region) / box_area(box))


def bounding_box(points: Sequence[Point]) -> Box:
    """Return the tight axis-aligned box around a non-empty set of points."""
    coords = np.asarray(points, dtype=float)
    x_min, y_min = coords.min(axis=0)
    x_max, y_max = coords.max(axis=0)
    return (float(x_min), float(y_min), float(x_max - x_min), float(y_max - y_min))


def cosine_similarity(vec_a: np.ndarray, vec_b: np.ndarray) -> float:
    """Return the cosine of the angle between two vectors, 0 if either is zero."""
    norm = float(np.linalg.norm(vec_a) * np.linalg.norm(vec_b))
    if norm == 0.0:
        return 0.0
    return float(np.dot(vec_a, vec_b) / norm)
