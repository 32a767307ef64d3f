"""Per-category suppression: preprocessing, greedy baselines, the QUBO path,
and score-based recovery of suppressed boxes.

Suppression never mixes categories.  Detections of each category are
preprocessed, then either a greedy baseline runs (nms, soft_nms) or a
coefficient matrix is built and handed to a solver; the kept set may then be
topped up by soft-scoring, which returns each suppressed box whose decayed
score still clears the threshold.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .appearance import (
    BlockStats,
    SsimConfig,
    extract_patch,
    ssim_matrix_blocked,
)
from .geometry import BBox, intersection_matrix, iou
from .qubo import (
    DEFAULT_WEIGHTS,
    PairwiseTerms,
    Weights,
    build_qaqs,
    build_qaqs_c,
    build_qf,
    build_qsqs,
    build_qsqs_c,
    pairwise_terms,
)
from .reorder import rcm_order
from .solvers import QuboProblem, SolverConfig, solve

METHODS = ("nms", "soft_nms", "qf", "qsqs", "qsqs_c", "qaqs", "qaqs_c")
QUBO_METHODS = ("qf", "qsqs", "qsqs_c", "qaqs", "qaqs_c")
APPEARANCE_METHODS = ("qaqs", "qaqs_c")
PREPROCESS_KINDS = ("confidence", "nms")

STAGES = ("patch_extract", "ssim", "build", "solve", "soft_score")


@dataclass(frozen=True)
class Detection:
    """One scored box of one category on one image."""

    box: BBox
    score: float
    category: int
    image: int

    def __post_init__(self) -> None:
        if not (0.0 < self.score <= 1.0):
            raise ValueError(f"score must lie in (0, 1], got {self.score}")


@dataclass(frozen=True)
class SoftScoreConfig:
    """Gaussian decay against the closest kept box, with a keep threshold."""

    sigma: float = 0.5
    o_t: float = 0.01

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.o_t < 0:
            raise ValueError(f"o_t must be non-negative, got {self.o_t}")


@dataclass(frozen=True)
class PreprocessConfig:
    """What runs before suppression: a confidence floor or a greedy NMS."""

    kind: str = "confidence"
    confidence_threshold: float = 0.25
    nms_iou_threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in PREPROCESS_KINDS:
            raise ValueError(
                f"unknown preprocess kind {self.kind!r}, expected one of {PREPROCESS_KINDS}"
            )
        if not (0.0 <= self.confidence_threshold <= 1.0):
            raise ValueError(f"confidence_threshold outside [0, 1]: {self.confidence_threshold}")
        if not (0.0 <= self.nms_iou_threshold <= 1.0):
            raise ValueError(f"nms_iou_threshold outside [0, 1]: {self.nms_iou_threshold}")


@dataclass(frozen=True)
class SuppressionConfig:
    method: str = "qsqs"
    weights: Weights = DEFAULT_WEIGHTS
    pairwise_mode: str = "iou"
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    soft_score: SoftScoreConfig | None = None
    nms_iou_threshold: float = 0.3
    soft_nms_sigma: float = 0.5
    soft_nms_floor: float = 0.001
    block_threshold: int = 8
    solver: SolverConfig = field(default_factory=SolverConfig)
    ssim: SsimConfig = field(default_factory=SsimConfig)

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if not (0.0 <= self.nms_iou_threshold <= 1.0):
            raise ValueError(f"nms_iou_threshold outside [0, 1]: {self.nms_iou_threshold}")
        if self.soft_nms_sigma <= 0:
            raise ValueError(f"soft_nms_sigma must be positive, got {self.soft_nms_sigma}")
        if self.soft_nms_floor < 0:
            raise ValueError(f"soft_nms_floor must be non-negative, got {self.soft_nms_floor}")
        if self.block_threshold < 1:
            raise ValueError(f"block_threshold must be >= 1, got {self.block_threshold}")


# Preprocessing regimes studied for the combined-with-soft-scoring variants,
# plus the plain confidence floor the main comparisons use.
PRESETS: dict[str, dict] = {
    "confidence": {"preprocess": PreprocessConfig("confidence"), "soft_score": None},
    "confidence_soft": {
        "preprocess": PreprocessConfig("confidence"),
        "soft_score": SoftScoreConfig(sigma=0.5, o_t=0.01),
    },
    "nms": {"preprocess": PreprocessConfig("nms"), "soft_score": None},
    "nms_soft": {
        "preprocess": PreprocessConfig("nms"),
        "soft_score": SoftScoreConfig(sigma=0.5, o_t=0.01),
    },
}


@dataclass
class CategoryReport:
    category: int
    n_input: int
    n_preprocessed: int
    n_kept: int
    solver_status: str  # "optimal" | "incumbent" | "timeout" | "n/a"


@dataclass
class ImageReport:
    image: int
    method: str
    categories: list[CategoryReport] = field(default_factory=list)
    stage_seconds: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for s in STAGES:
            self.stage_seconds.setdefault(s, 0.0)

    @property
    def n_input(self) -> int:
        return sum(c.n_input for c in self.categories)

    @property
    def n_preprocessed(self) -> int:
        return sum(c.n_preprocessed for c in self.categories)

    @property
    def n_kept(self) -> int:
        return sum(c.n_kept for c in self.categories)


def preprocess_confidence(dets: list[Detection], threshold: float) -> list[Detection]:
    """Keep detections scoring at least the threshold, order preserved."""
    return [d for d in dets if d.score >= threshold]


def nms(dets: list[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy NMS over one category.

    Repeatedly keeps the highest-scoring remaining box (ties by original
    index) and drops every remaining box with IoU strictly above the
    threshold against it.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    alive = [True] * len(dets)
    kept: list[Detection] = []
    for i in order:
        if not alive[i]:
            continue
        kept.append(dets[i])
        alive[i] = False
        for j in order:
            if alive[j] and iou(dets[i].box, dets[j].box) > iou_threshold:
                alive[j] = False
    return kept


def soft_nms(dets: list[Detection], sigma: float, score_floor: float) -> list[Detection]:
    """Gaussian soft-NMS over one category.

    Instead of dropping overlaps outright, each remaining box decays by
    exp(-iou^2 / sigma) against the latest kept box; decayed boxes falling
    under the score floor leave the pool.  Boxes the pick does not overlap
    are untouched, so the floor can never starve a disjoint cluster.  Kept
    boxes carry their decayed scores.
    """
    pool = list(enumerate(dets))  # (original index, det), scores mutate via replace
    kept: list[Detection] = []
    while pool:
        k = min(range(len(pool)), key=lambda t: (-pool[t][1].score, pool[t][0]))
        idx, top = pool.pop(k)
        kept.append(top)
        nxt: list[tuple[int, Detection]] = []
        for j, d in pool:
            o = iou(top.box, d.box)
            if o == 0.0:
                nxt.append((j, d))
                continue
            s = d.score * math.exp(-(o * o) / sigma)
            if s >= score_floor:
                nxt.append((j, replace(d, score=s)))
        pool = nxt
    return kept


def soft_score(
    kept: list[Detection],
    suppressed: list[Detection],
    cfg: SoftScoreConfig,
) -> list[Detection]:
    """Second chance for suppressed boxes.

    Each suppressed box decays its score once, against the kept box it
    overlaps most, and returns (rescored) iff the result clears o_t.  With
    no kept boxes there is nothing to decay against and the suppressed list
    comes back unchanged.
    """
    if not kept:
        return list(suppressed)
    restored: list[Detection] = []
    for d in suppressed:
        best = max(iou(d.box, k.box) for k in kept)
        s = d.score * math.exp(-(best * best) / cfg.sigma)
        if s >= cfg.o_t:
            restored.append(replace(d, score=s))
    return restored


def _build_matrix(method, v, terms: PairwiseTerms, a, w: Weights):
    if method == "qf":
        return build_qf(v, terms, w)
    if method == "qsqs":
        return build_qsqs(v, terms, w)
    if method == "qsqs_c":
        return build_qsqs_c(v, terms, w)
    if method == "qaqs":
        return build_qaqs(v, terms, a, w)
    if method == "qaqs_c":
        return build_qaqs_c(v, terms, a, w)
    raise ValueError(f"not a QUBO method: {method!r}")


def _suppress_category(
    image: np.ndarray | None,
    dets: list[Detection],
    cfg: SuppressionConfig,
    report: ImageReport | None,
) -> tuple[list[Detection], str, int]:
    pre = cfg.preprocess
    if pre.kind == "confidence":
        kept_pool = preprocess_confidence(dets, pre.confidence_threshold)
    else:
        kept_pool = nms(dets, pre.nms_iou_threshold)
    n_pre = len(kept_pool)

    if cfg.method == "nms":
        return nms(kept_pool, cfg.nms_iou_threshold), "n/a", n_pre
    if cfg.method == "soft_nms":
        return soft_nms(kept_pool, cfg.soft_nms_sigma, cfg.soft_nms_floor), "n/a", n_pre

    if not kept_pool:
        return [], "n/a", n_pre

    timer = _StageTimer(report)
    boxes = [d.box for d in kept_pool]
    v = np.array([d.score for d in kept_pool], dtype=np.float64)

    with timer("build"):
        terms = pairwise_terms(boxes, cfg.pairwise_mode)

    a = None
    if cfg.method in APPEARANCE_METHODS:
        if image is None:
            raise ValueError(
                f"method {cfg.method!r} scores appearance and needs the image raster"
            )
        with timer("patch_extract"):
            patches = [
                extract_patch(image, b, cfg.ssim, index=i) for i, b in enumerate(boxes)
            ]
        with timer("ssim"):
            inter = intersection_matrix(boxes)
            perm = rcm_order(inter)
            a = ssim_matrix_blocked(
                patches, inter, perm, cfg.ssim,
                block_threshold=cfg.block_threshold, stats=BlockStats(),
            )

    with timer("build"):
        coeff = _build_matrix(cfg.method, v, terms, a, cfg.weights)
        problem = QuboProblem(coeff.q, "maximize")
    with timer("solve"):
        solution = solve(problem, cfg.solver)

    kept = [d for d, bit in zip(kept_pool, solution.assignment) if bit]
    dropped = [d for d, bit in zip(kept_pool, solution.assignment) if not bit]
    if cfg.soft_score is not None:
        with timer("soft_score"):
            kept = kept + soft_score(kept, dropped, cfg.soft_score)

    if solution.optimal:
        status = "optimal"
    elif cfg.solver.kind == "branch_and_bound":
        status = "timeout"
    else:
        status = "incumbent"
    return kept, status, n_pre


def suppress(
    image: np.ndarray | None,
    dets: list[Detection],
    cfg: SuppressionConfig,
    report: ImageReport | None = None,
) -> list[Detection]:
    """Suppress redundant detections of one image, category by category.

    Returns a subset of the preprocessed input (rescored where soft_nms or
    soft-scoring applies), sorted by descending score.  Ties break on
    category then box coordinates, so output never depends on input order
    beyond content.  ``image`` may be None for purely geometric methods.
    """
    merged: list[Detection] = []
    for cat in sorted({d.category for d in dets}):
        cat_dets = [d for d in dets if d.category == cat]
        kept, status, n_pre = _suppress_category(image, cat_dets, cfg, report)
        if report is not None:
            report.categories.append(
                CategoryReport(
                    category=cat,
                    n_input=len(cat_dets),
                    n_preprocessed=n_pre,
                    n_kept=len(kept),
                    solver_status=status,
                )
            )
        merged.extend(kept)

    def sort_key(d: Detection):
        return (-d.score, d.category, d.box.x1, d.box.y1, d.box.x2, d.box.y2)

    return sorted(merged, key=sort_key)


class _StageTimer:
    """Accumulates wall time per stage into an ImageReport, or nothing."""

    def __init__(self, report: ImageReport | None):
        self.report = report

    def __call__(self, stage: str):
        return _StageSpan(self.report, stage)


class _StageSpan:
    def __init__(self, report: ImageReport | None, stage: str):
        self.report = report
        self.stage = stage

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        if self.report is not None:
            self.report.stage_seconds[self.stage] += time.perf_counter() - self.t0
        return False
