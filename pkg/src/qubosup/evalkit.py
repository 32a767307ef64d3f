"""COCO-style evaluation at desk scale: greedy matching, 101-point
interpolated AP over the 0.50:0.05:0.95 threshold ladder, size buckets, and
recall at detection caps.

Ground truth outside the active size bucket is ignored rather than counted
against predictions, and predictions matching only ignored ground truth are
left out of both true and false positives.  A metric with no applicable
ground truth reports the -1 sentinel and drops out of every mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BBox, boxes_to_array, iou_matrix
from .pipeline import Detection

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
AREA_RANGES = {
    "all": (0.0, float("inf")),
    "small": (0.0, 32.0**2),
    "medium": (32.0**2, 96.0**2),
    "large": (96.0**2, float("inf")),
}
NOT_APPLICABLE = -1.0


@dataclass(frozen=True)
class GroundTruth:
    """One reference box of one category on one image."""

    box: BBox
    category: int
    image: int


@dataclass
class EvalReport:
    """Aggregate detection quality.  Entries are in [0, 1], or -1 where no
    ground truth made the metric applicable.
    """

    map: float
    map_50: float
    map_75: float
    map_small: float
    map_medium: float
    map_large: float
    mar_1: float
    mar_10: float
    mar_100: float
    mar_small: float
    mar_medium: float
    mar_large: float

    def to_dict(self) -> dict[str, float]:
        return {
            "mAP": self.map,
            "mAP@50": self.map_50,
            "mAP@75": self.map_75,
            "mAP@S": self.map_small,
            "mAP@M": self.map_medium,
            "mAP@L": self.map_large,
            "mAR@1": self.mar_1,
            "mAR@10": self.mar_10,
            "mAR@100": self.mar_100,
            "mAR@S": self.mar_small,
            "mAR@M": self.mar_medium,
            "mAR@L": self.mar_large,
        }


def match_greedy(
    preds: list[Detection],
    gts: list[GroundTruth],
    iou_threshold: float,
) -> tuple[list[bool], list[bool]]:
    """Greedy one-to-one matching for a single image and category.

    ``preds`` must already be sorted by descending score.  Each prediction
    takes the still-unmatched ground truth of highest IoU at or above the
    threshold, ties by lowest ground-truth index.  Returns (per-prediction
    true-positive flags, per-ground-truth matched flags).
    """
    scores = [p.score for p in preds]
    if any(scores[i] < scores[i + 1] for i in range(len(scores) - 1)):
        raise ValueError("predictions must be sorted by descending score")
    tp = [False] * len(preds)
    matched = [False] * len(gts)
    if not preds or not gts:
        return tp, matched
    ious = iou_matrix(
        boxes_to_array([p.box for p in preds]), boxes_to_array([g.box for g in gts])
    )
    for i in range(len(preds)):
        best_j = -1
        best = -1.0
        for j in range(len(gts)):
            if matched[j]:
                continue
            v = ious[i, j]
            # Strict improvement only, so equal-IoU ties stay on the lowest
            # ground-truth index.
            if v >= iou_threshold and v > best:
                best = v
                best_j = j
        if best_j >= 0:
            tp[i] = True
            matched[best_j] = True
    return tp, matched


def _sorted_preds(preds: list[Detection]) -> list[Detection]:
    # Content-based tiebreak keeps every metric invariant under permutations
    # of equal-score predictions.
    return sorted(
        preds,
        key=lambda d: (-d.score, d.image, d.box.x1, d.box.y1, d.box.x2, d.box.y2),
    )


def _match_image(
    preds: list[Detection],
    gts: list[GroundTruth],
    iou_t: float,
    area_range: tuple[float, float],
    max_dets: int,
) -> tuple[list[float], list[bool], list[bool], int]:
    """One (image, category) cell.

    Returns (scores, tp flags, ignore flags, applicable gt count) for the
    capped prediction list.  Ground truth outside the area range is
    ignorable: it can absorb a prediction, but neither side then counts.
    """
    dts = preds[:max_dets]
    lo, hi = area_range
    gt_ignore = [not (lo <= g.box.area < hi) for g in gts]
    gt_order = sorted(range(len(gts)), key=lambda j: gt_ignore[j])  # stable
    gt_matched = [False] * len(gts)

    ious = None
    if dts and gts:
        ious = iou_matrix(
            boxes_to_array([d.box for d in dts]), boxes_to_array([g.box for g in gts])
        )

    tp = [False] * len(dts)
    ignored = [False] * len(dts)
    for i in range(len(dts)):
        best_j = -1
        best = -1.0
        for j in gt_order:
            if gt_matched[j]:
                continue
            if best_j >= 0 and not gt_ignore[best_j] and gt_ignore[j]:
                break  # a real match is in hand; only ignorable ones remain
            v = ious[i, j]
            if v >= iou_t and v > best:
                best = v
                best_j = j
        if best_j >= 0:
            gt_matched[best_j] = True
            if gt_ignore[best_j]:
                ignored[i] = True
            else:
                tp[i] = True
        else:
            area = dts[i].box.area
            if not (lo <= area < hi):
                ignored[i] = True  # out-of-bucket miss, not this bucket's FP
    n_applicable = sum(1 for flag in gt_ignore if not flag)
    return [d.score for d in dts], tp, ignored, n_applicable


def _ap_from_counts(scores, tp, ignored, n_gt) -> float:
    if n_gt == 0:
        return NOT_APPLICABLE
    order = np.argsort([-s for s in scores], kind="stable")
    tps, fps = [], []
    for k in order:
        if ignored[k]:
            continue
        tps.append(1 if tp[k] else 0)
        fps.append(0 if tp[k] else 1)
    if not tps:
        return 0.0
    tps = np.cumsum(tps)
    fps = np.cumsum(fps)
    recall = tps / n_gt
    precision = tps / np.maximum(tps + fps, 1)
    # Monotone envelope from the right, then sample at the 101 recall points.
    prec = precision.copy()
    for i in range(len(prec) - 2, -1, -1):
        prec[i] = max(prec[i], prec[i + 1])
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < len(prec), prec[np.minimum(idx, len(prec) - 1)], 0.0)
    return float(sampled.mean())


def _recall_from_counts(tp, ignored, n_gt) -> float:
    if n_gt == 0:
        return NOT_APPLICABLE
    hits = sum(1 for t, ig in zip(tp, ignored) if t and not ig)
    return hits / n_gt


def _mean_applicable(values: list[float]) -> float:
    vals = [v for v in values if v != NOT_APPLICABLE]
    if not vals:
        return NOT_APPLICABLE
    return float(np.mean(vals))


def evaluate(preds: list[Detection], gts: list[GroundTruth]) -> EvalReport:
    """Score predictions against ground truth.

    Categories come from the ground truth; a prediction of a category absent
    there raises.  AP metrics cap at 100 detections per image and category.
    """
    gt_cats = sorted({g.category for g in gts})
    unknown = sorted({p.category for p in preds} - set(gt_cats))
    if unknown:
        raise ValueError(f"predictions reference unknown categories: {unknown}")

    images = sorted({g.image for g in gts} | {p.image for p in preds})
    by_cell_p: dict[tuple[int, int], list[Detection]] = {}
    for p in _sorted_preds(preds):
        by_cell_p.setdefault((p.image, p.category), []).append(p)
    by_cell_g: dict[tuple[int, int], list[GroundTruth]] = {}
    for g in gts:
        by_cell_g.setdefault((g.image, g.category), []).append(g)

    def ap_cells(iou_t: float, area: str, max_dets: int) -> list[float]:
        out = []
        rng = AREA_RANGES[area]
        for cat in gt_cats:
            scores_all, tp_all, ig_all, n_gt = [], [], [], 0
            for img in images:
                s, t, ig, n = _match_image(
                    by_cell_p.get((img, cat), []),
                    by_cell_g.get((img, cat), []),
                    iou_t, rng, max_dets,
                )
                scores_all += s
                tp_all += t
                ig_all += ig
                n_gt += n
            out.append(_ap_from_counts(scores_all, tp_all, ig_all, n_gt))
        return out

    def ar_cells(iou_t: float, area: str, max_dets: int) -> list[float]:
        out = []
        rng = AREA_RANGES[area]
        for cat in gt_cats:
            hits, n_gt = 0.0, 0
            for img in images:
                _, t, ig, n = _match_image(
                    by_cell_p.get((img, cat), []),
                    by_cell_g.get((img, cat), []),
                    iou_t, rng, max_dets,
                )
                hits += sum(1 for a, b in zip(t, ig) if a and not b)
                n_gt += n
            out.append(hits / n_gt if n_gt else NOT_APPLICABLE)
        return out

    def mean_ap(thresholds, area: str, max_dets: int = 100) -> float:
        cells: list[float] = []
        for t in thresholds:
            cells += ap_cells(t, area, max_dets)
        return _mean_applicable(cells)

    def mean_ar(area: str, max_dets: int) -> float:
        cells: list[float] = []
        for t in IOU_THRESHOLDS:
            cells += ar_cells(t, area, max_dets)
        return _mean_applicable(cells)

    return EvalReport(
        map=mean_ap(IOU_THRESHOLDS, "all"),
        map_50=mean_ap([0.5], "all"),
        map_75=mean_ap([0.75], "all"),
        map_small=mean_ap(IOU_THRESHOLDS, "small"),
        map_medium=mean_ap(IOU_THRESHOLDS, "medium"),
        map_large=mean_ap(IOU_THRESHOLDS, "large"),
        mar_1=mean_ar("all", 1),
        mar_10=mean_ar("all", 10),
        mar_100=mean_ar("all", 100),
        mar_small=mean_ar("small", 100),
        mar_medium=mean_ar("medium", 100),
        mar_large=mean_ar("large", 100),
    )
