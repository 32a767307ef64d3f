"""Axis-aligned box arithmetic: IoU, generalized IoU, the spatial feature,
and the binary overlap structure used to prune appearance work.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BBox:
    """Box in corner form with strictly positive extent on both axes."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(
                f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2}): "
                "requires x1 < x2 and y1 < y2"
            )

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BBox":
        """Build from the (x, y, width, height) wire convention."""
        return cls(float(x), float(y), float(x) + float(w), float(y) + float(h))

    def to_xywh(self) -> tuple[float, float, float, float]:
        return self.x1, self.y1, self.x2 - self.x1, self.y2 - self.y1


@dataclass
class IntersectionMatrix:
    """Symmetric binary matrix with I[i][j] = 1 iff boxes i and j overlap
    with positive area.  The diagonal is all ones.
    """

    bits: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.bits, dtype=np.uint8)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError(f"intersection matrix must be square, got shape {b.shape}")
        if not np.array_equal(b, b.T):
            raise ValueError("intersection matrix must be symmetric")
        if b.size and not np.all(np.diagonal(b) == 1):
            raise ValueError("intersection matrix diagonal must be all ones")
        if not np.all((b == 0) | (b == 1)):
            raise ValueError("intersection matrix entries must be 0 or 1")
        self.bits = b

    @property
    def n(self) -> int:
        return self.bits.shape[0]


def intersection_area(a: BBox, b: BBox) -> float:
    """Overlap area of two boxes.  Edge contact counts as zero."""
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union, in [0, 1]."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def hull(a: BBox, b: BBox) -> BBox:
    """Smallest axis-aligned box enclosing both inputs."""
    return BBox(
        min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2)
    )


def giou(a: BBox, b: BBox) -> float:
    """Generalized IoU: IoU minus the fraction of the enclosing hull not
    covered by the union.  Lies in (-1, 1]; non-positive for disjoint boxes.
    """
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    c = hull(a, b).area
    iou_val = inter / union if inter > 0.0 else 0.0
    # c >= union mathematically; clamp the slack so roundoff on nested boxes
    # can never push giou above iou
    return iou_val - max(c - union, 0.0) / c


def spatial_feature(a: BBox, b: BBox) -> float:
    """Overlap area normalized by the geometric mean of the two areas.

    Dominates IoU for any pair because the union is never smaller than the
    geometric mean of the areas.
    """
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / float(np.sqrt(a.area * b.area))


def boxes_to_array(boxes) -> np.ndarray:
    """Stack boxes into an (n, 4) float array of corners."""
    if len(boxes) == 0:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([[b.x1, b.y1, b.x2, b.y2] for b in boxes], dtype=np.float64)


def _pairwise_intersection(arr_a: np.ndarray, arr_b: np.ndarray) -> np.ndarray:
    w = np.minimum(arr_a[:, None, 2], arr_b[None, :, 2]) - np.maximum(
        arr_a[:, None, 0], arr_b[None, :, 0]
    )
    h = np.minimum(arr_a[:, None, 3], arr_b[None, :, 3]) - np.maximum(
        arr_a[:, None, 1], arr_b[None, :, 1]
    )
    return np.maximum(w, 0.0) * np.maximum(h, 0.0)


def _areas(arr: np.ndarray) -> np.ndarray:
    return (arr[:, 2] - arr[:, 0]) * (arr[:, 3] - arr[:, 1])


def iou_matrix(arr_a: np.ndarray, arr_b: np.ndarray | None = None) -> np.ndarray:
    """Pairwise IoU between two stacks of corner-form boxes.

    With one argument, returns the symmetric self-IoU matrix.
    """
    if arr_b is None:
        arr_b = arr_a
    inter = _pairwise_intersection(arr_a, arr_b)
    union = _areas(arr_a)[:, None] + _areas(arr_b)[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=inter > 0.0)
    return out


def spatial_feature_matrix(arr: np.ndarray) -> np.ndarray:
    """Pairwise spatial feature for one stack of corner-form boxes."""
    inter = _pairwise_intersection(arr, arr)
    areas = _areas(arr)
    denom = np.sqrt(areas[:, None] * areas[None, :])
    out = np.zeros_like(inter)
    np.divide(inter, denom, out=out, where=inter > 0.0)
    return out


def giou_matrix(arr: np.ndarray) -> np.ndarray:
    """Pairwise generalized IoU for one stack of corner-form boxes."""
    inter = _pairwise_intersection(arr, arr)
    areas = _areas(arr)
    union = areas[:, None] + areas[None, :] - inter
    cw = np.maximum(arr[:, None, 2], arr[None, :, 2]) - np.minimum(
        arr[:, None, 0], arr[None, :, 0]
    )
    ch = np.maximum(arr[:, None, 3], arr[None, :, 3]) - np.minimum(
        arr[:, None, 1], arr[None, :, 1]
    )
    c = cw * ch
    iou_vals = np.zeros_like(inter)
    np.divide(inter, union, out=iou_vals, where=inter > 0.0)
    # same slack clamp as the scalar form
    return iou_vals - np.maximum(c - union, 0.0) / c


def intersection_matrix(boxes) -> IntersectionMatrix:
    """Binary overlap structure of a box list.  Edge-touching boxes do not
    count as overlapped; every box overlaps itself.
    """
    arr = boxes_to_array(boxes)
    inter = _pairwise_intersection(arr, arr)
    bits = (inter > 0.0).astype(np.uint8)
    # Zero-area self-intersection cannot happen for valid boxes, but keep the
    # diagonal explicit so the invariant never depends on float comparisons.
    np.fill_diagonal(bits, 1)
    return IntersectionMatrix(bits)
