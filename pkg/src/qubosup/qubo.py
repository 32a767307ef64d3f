"""Coefficient matrices for suppression as a binary quadratic program.

The objective  maximize x^T Q x  over x in {0,1}^n rewards confidence on the
diagonal and penalizes pairwise redundancy off it:

    qf      Q = w1*diag(v) - w2*P1                      (w3 = 0)
    qsqs    Q = w1*diag(v) - (w2*P1 + w3*P2)
    qsqs_c  off-diagonal penalty additionally scaled by v_i*v_j
    qaqs    penalty scaled entrywise by the appearance matrix A
    qaqs_c  appearance-scaled penalty, rescaled by v_i*v_j

P1 is pairwise IoU and P2 the spatial feature; both leave the diagonal to
the confidence term.  Since A is in [0, 1] and confidences in (0, 1], each
rescaling can only shrink penalty magnitudes, never grow them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .appearance import AppearanceMatrix
from .geometry import (
    boxes_to_array,
    giou_matrix,
    iou_matrix,
    spatial_feature_matrix,
)

FORMULATIONS = ("qf", "qsqs", "qsqs_c", "qaqs", "qaqs_c")
PAIRWISE_MODES = ("iou", "giou_sparse")

_WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class Weights:
    """Convex combination steering confidence against the two penalties."""

    w1: float
    w2: float
    w3: float = 0.0

    def __post_init__(self) -> None:
        if min(self.w1, self.w2, self.w3) < 0.0:
            raise ValueError(f"weights must be non-negative: {self}")
        total = self.w1 + self.w2 + self.w3
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1 within {_WEIGHT_TOL}, got {total}")


DEFAULT_WEIGHTS = Weights(0.4, 0.3, 0.3)


@dataclass
class PairwiseTerms:
    """IoU matrix P1 and spatial-feature matrix P2 with zero diagonals."""

    p1: np.ndarray
    p2: np.ndarray
    mode: str = "iou"

    def __post_init__(self) -> None:
        p1 = np.asarray(self.p1, dtype=np.float64)
        p2 = np.asarray(self.p2, dtype=np.float64)
        if p1.shape != p2.shape or p1.ndim != 2 or p1.shape[0] != p1.shape[1]:
            raise ValueError(f"P1/P2 must be square and equal-shaped: {p1.shape} vs {p2.shape}")
        if self.mode not in PAIRWISE_MODES:
            raise ValueError(f"unknown pairwise mode {self.mode!r}, expected one of {PAIRWISE_MODES}")
        self.p1, self.p2 = p1, p2

    @property
    def n(self) -> int:
        return self.p1.shape[0]


@dataclass
class CoefficientMatrix:
    """Symmetric Q with the formulation it was built under."""

    q: np.ndarray
    formulation: str

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError(f"Q must be square, got shape {q.shape}")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        self.q = q

    @property
    def n(self) -> int:
        return self.q.shape[0]


def pairwise_terms(boxes, mode: str = "iou") -> PairwiseTerms:
    """Build P1 and P2 for a box list.

    In ``giou_sparse`` mode a pair is zeroed in both matrices whenever its
    IoU falls below the enclosing-hull slack fraction, i.e. whenever the
    generalized IoU is negative.  Surviving entries are the same floats the
    plain mode produces.
    """
    if mode not in PAIRWISE_MODES:
        raise ValueError(f"unknown pairwise mode {mode!r}, expected one of {PAIRWISE_MODES}")
    arr = boxes_to_array(boxes)
    p1 = iou_matrix(arr)
    p2 = spatial_feature_matrix(arr)
    np.fill_diagonal(p1, 0.0)
    np.fill_diagonal(p2, 0.0)
    if mode == "giou_sparse":
        keep = giou_matrix(arr) >= 0.0
        p1 = np.where(keep, p1, 0.0)
        p2 = np.where(keep, p2, 0.0)
    return PairwiseTerms(p1, p2, mode)


def _check_confidences(v: np.ndarray, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (n,):
        raise ValueError(f"expected {n} confidences, got shape {v.shape}")
    if v.size and (v.min() <= 0.0 or v.max() > 1.0):
        raise ValueError("confidences must lie in (0, 1]")
    return v


def _penalty(p: PairwiseTerms, w: Weights) -> np.ndarray:
    return w.w2 * p.p1 + w.w3 * p.p2


def build_qf(v, p: PairwiseTerms, w: Weights) -> CoefficientMatrix:
    """Confidence diagonal against an IoU-only penalty.  Requires w3 = 0."""
    if w.w3 != 0.0:
        raise ValueError(f"qf requires w3 = 0, got w3 = {w.w3}")
    v = _check_confidences(v, p.n)
    q = np.diag(w.w1 * v) - w.w2 * p.p1
    return CoefficientMatrix(q, "qf")


def build_qsqs(v, p: PairwiseTerms, w: Weights = DEFAULT_WEIGHTS) -> CoefficientMatrix:
    """Confidence diagonal against the combined IoU + spatial penalty."""
    v = _check_confidences(v, p.n)
    q = np.diag(w.w1 * v) - _penalty(p, w)
    return CoefficientMatrix(q, "qsqs")


def build_qsqs_c(v, p: PairwiseTerms, w: Weights = DEFAULT_WEIGHTS) -> CoefficientMatrix:
    """qsqs with each pair penalty rescaled by the confidences v_i*v_j."""
    v = _check_confidences(v, p.n)
    q = np.diag(w.w1 * v) - _penalty(p, w) * np.outer(v, v)
    return CoefficientMatrix(q, "qsqs_c")


def build_qaqs(
    v, p: PairwiseTerms, a: AppearanceMatrix, w: Weights = DEFAULT_WEIGHTS
) -> CoefficientMatrix:
    """qsqs with each pair penalty rescaled by appearance similarity, so
    look-alike pairs stay expensive and distinct-looking overlaps get cheap.
    """
    v = _check_confidences(v, p.n)
    if a.n != p.n:
        raise ValueError(f"appearance matrix n={a.n} but pairwise terms n={p.n}")
    q = np.diag(w.w1 * v) - _penalty(p, w) * a.values
    return CoefficientMatrix(q, "qaqs")


def build_qaqs_c(
    v, p: PairwiseTerms, a: AppearanceMatrix, w: Weights = DEFAULT_WEIGHTS
) -> CoefficientMatrix:
    """qaqs penalty additionally rescaled by v_i*v_j."""
    v = _check_confidences(v, p.n)
    if a.n != p.n:
        raise ValueError(f"appearance matrix n={a.n} but pairwise terms n={p.n}")
    q = np.diag(w.w1 * v) - (_penalty(p, w) * a.values) * np.outer(v, v)
    return CoefficientMatrix(q, "qaqs_c")
