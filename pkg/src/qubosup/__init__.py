"""QUBO-based suppression of redundant object-detection boxes.

Pick the subset of detections maximizing x^T Q x, where Q rewards
confidence on its diagonal and penalizes pairwise overlap off it; the
appearance-aware variants additionally scale each penalty by the structural
similarity of the two crops, letting genuinely distinct but occluding
objects coexist.
"""

from .appearance import (
    AppearanceMatrix,
    Patch,
    SsimConfig,
    extract_patch,
    ssim_matrix_blocked,
    ssim_matrix_naive,
    ssim_pair,
)
from .evalkit import EvalReport, GroundTruth, evaluate, match_greedy
from .geometry import (
    BBox,
    IntersectionMatrix,
    giou,
    intersection_matrix,
    iou,
    spatial_feature,
)
from .io import (
    build_config,
    load_config,
    load_detections,
    load_groundtruth,
    load_image,
    save_detections,
    save_groundtruth,
    save_image,
)
from .pipeline import (
    CategoryReport,
    Detection,
    ImageReport,
    PreprocessConfig,
    PRESETS,
    SoftScoreConfig,
    SuppressionConfig,
    nms,
    preprocess_confidence,
    soft_nms,
    soft_score,
    suppress,
)
from .qubo import (
    CoefficientMatrix,
    PairwiseTerms,
    Weights,
    build_qaqs,
    build_qaqs_c,
    build_qf,
    build_qsqs,
    build_qsqs_c,
    pairwise_terms,
)
from .reorder import Permutation, bandwidth, rcm_order
from .solvers import (
    AnnealingSchedule,
    QuboProblem,
    QuboSolution,
    SolverConfig,
    register_backend,
    solve,
    solve_annealing,
    solve_branch_and_bound,
    solve_exhaustive,
)
from .report import RunReport
from .synth import SceneFiles, synth_scene, write_scene

__version__ = "0.1.0"
