"""Acceptance gate: one test per release criterion, tolerances stated inline.

Run with -v to get one pass/fail line per criterion.  These tests cut across
modules on purpose; the per-module suites pin the details, this file checks
the promises a release stands on.
"""

import json
import time

import numpy as np
import pytest

from qubosup.appearance import (
    BlockStats,
    Patch,
    SsimConfig,
    extract_patch,
    ssim_matrix_blocked,
    ssim_matrix_naive,
)
from qubosup.cli import main
from qubosup.evalkit import GroundTruth, evaluate
from qubosup.geometry import BBox, intersection_matrix
from qubosup.io import load_detections, load_groundtruth, load_image
from qubosup.pipeline import (
    PRESETS,
    Detection,
    SoftScoreConfig,
    SuppressionConfig,
    suppress,
)
from qubosup.qubo import (
    AppearanceMatrix,
    build_qaqs,
    build_qaqs_c,
    build_qsqs,
    build_qsqs_c,
    pairwise_terms,
)
from qubosup.reorder import rcm_order
from qubosup.solvers import (
    QuboProblem,
    SolverConfig,
    solve_branch_and_bound,
    solve_exhaustive,
)
from qubosup.synth import synth_scene

from conftest import DATA_DIR, random_boxes, random_patches, random_qubo


def test_1_branch_and_bound_matches_exhaustive_oracle():
    """400 random instances (n in 2..16, dense and sparse): objectives equal
    exactly, assignments equal under the tie-breaking rule, under 60 s total.
    """
    rng = np.random.default_rng(20240817)
    start = time.perf_counter()
    for k in range(400):
        n = 2 + k % 15
        density = 1.0 if k < 200 else 0.4
        problem = QuboProblem(random_qubo(rng, n, density))
        exact = solve_exhaustive(problem)
        bb = solve_branch_and_bound(problem)
        assert bb.optimal
        assert bb.objective == exact.objective
        assert np.array_equal(bb.assignment, exact.assignment)
    assert time.perf_counter() - start < 60.0


def test_2_blocked_ssim_matches_naive_and_skips_work():
    """Blocked similarity equals the all-pairs reference within 1e-9 on
    overlapping entries across 50 scenes up to n=128; block_threshold=1
    evaluates exactly the overlapping upper-triangle; the crowded fixture
    needs at most half the naive pair count.
    """
    rng = np.random.default_rng(7711)
    cfg = SsimConfig()
    for _ in range(50):
        n = int(rng.integers(4, 129))
        boxes = random_boxes(rng, n)
        inter = intersection_matrix(boxes)
        perm = rcm_order(inter)
        patches = [Patch(a) for a in random_patches(rng, n, 16)]
        naive = ssim_matrix_naive(patches, cfg).values
        blocked = ssim_matrix_blocked(patches, inter, perm, cfg).values
        on = inter.bits.astype(bool)
        assert np.max(np.abs(blocked[on] - naive[on]), initial=0.0) <= 1e-9

        stats = BlockStats()
        ssim_matrix_blocked(patches, inter, perm, cfg, block_threshold=1, stats=stats)
        upper = int(np.triu(inter.bits, k=1).sum())
        assert stats.pairs_evaluated == upper

    image, gts, _ = synth_scene(7, 64, 0.6, image_size=512)
    boxes = [g.box for g in gts]
    inter = intersection_matrix(boxes)
    perm = rcm_order(inter)
    patches = [extract_patch(image, b, cfg) for b in boxes]
    stats = BlockStats()
    ssim_matrix_blocked(patches, inter, perm, cfg, stats=stats)
    n = len(boxes)
    assert 2 * stats.pairs_evaluated <= n * (n - 1) // 2


def test_3_penalty_magnitude_chain():
    """On 100 random scenes, off-diagonal magnitudes obey
    |qaqs_c| <= |qaqs| <= |qsqs| and |qsqs_c| <= |qsqs| entrywise, exactly.
    """
    rng = np.random.default_rng(333)
    for _ in range(100):
        n = int(rng.integers(2, 30))
        terms = pairwise_terms(random_boxes(rng, n))
        v = rng.uniform(0.05, 1.0, size=n)
        a = rng.uniform(0.0, 1.0, size=(n, n))
        a = (a + a.T) / 2.0
        np.fill_diagonal(a, 1.0)
        appearance = AppearanceMatrix(a)

        q_qsqs = build_qsqs(v, terms).q
        q_qsqs_c = build_qsqs_c(v, terms).q
        q_qaqs = build_qaqs(v, terms, appearance).q
        q_qaqs_c = build_qaqs_c(v, terms, appearance).q

        off = ~np.eye(n, dtype=bool)
        assert np.all(np.abs(q_qaqs_c[off]) <= np.abs(q_qaqs[off]))
        assert np.all(np.abs(q_qaqs[off]) <= np.abs(q_qsqs[off]))
        assert np.all(np.abs(q_qsqs_c[off]) <= np.abs(q_qsqs[off]))


def test_4_giou_sparsification():
    """Hull-slack sparsification never adds nonzeros on 100 random scenes,
    strictly removes the constructed corner-touching pair, and leaves every
    surviving coefficient bit-identical.
    """
    rng = np.random.default_rng(444)
    for _ in range(100):
        n = int(rng.integers(2, 40))
        boxes = random_boxes(rng, n)
        v = rng.uniform(0.05, 1.0, size=n)
        q_dense = build_qsqs(v, pairwise_terms(boxes, "iou")).q
        q_sparse = build_qsqs(v, pairwise_terms(boxes, "giou_sparse")).q
        assert np.count_nonzero(q_sparse) <= np.count_nonzero(q_dense)
        survivors = q_sparse != 0.0
        np.testing.assert_array_equal(q_sparse[survivors], q_dense[survivors])

    pair = [BBox(0.0, 0.0, 10.0, 10.0), BBox(9.0, 9.0, 20.0, 20.0)]
    v = np.array([0.9, 0.8])
    q_dense = build_qsqs(v, pairwise_terms(pair, "iou")).q
    q_sparse = build_qsqs(v, pairwise_terms(pair, "giou_sparse")).q
    assert np.count_nonzero(q_sparse) < np.count_nonzero(q_dense)


def test_5_occlusion_retention():
    """Frozen staged scenes, exhaustive-solver optima: overlap alone keeps
    one of the distinct-texture pair, the appearance term keeps both, and
    confidence weighting additionally retains the low-confidence occluded
    box that the unweighted penalty suppresses.
    """
    d = DATA_DIR / "occlusion"
    dets = load_detections(d / "detections.json")

    def kept(image_id, method):
        image = load_image(d / f"{image_id}.png")
        subset = [x for x in dets if x.image == image_id]
        cfg = SuppressionConfig(method=method, solver=SolverConfig(kind="exhaustive"))
        return {x.score for x in suppress(image, subset, cfg)}, sorted(
            (x.score for x in subset), reverse=True
        )

    kept_qsqs, scores = kept(0, "qsqs")
    assert kept_qsqs == {scores[0]}
    kept_qaqs, scores = kept(0, "qaqs")
    assert kept_qaqs == set(scores[:2])

    kept_qaqs, scores = kept(1, "qaqs")
    assert kept_qaqs == {scores[0]}
    kept_qaqs_c, scores = kept(1, "qaqs_c")
    assert kept_qaqs_c == {scores[0], scores[2]}


def identity(det: Detection):
    return (det.image, det.category, det.box.x1, det.box.y1, det.box.x2, det.box.y2)


def test_6_soft_scoring_semantics():
    """With o_t=0 and sigma=1e6 every preprocessed box survives; under the
    regime-1 preset (confidence 0.25, sigma 0.5, o_t 0.01) the three QUBO
    formulations converge to identical final sets because soft-scoring
    restores every suppressed box.
    """
    _, _, dets = synth_scene(91, 10, 0.6, image_size=256)
    wide_open = SuppressionConfig(
        method="qsqs",
        soft_score=SoftScoreConfig(sigma=1e6, o_t=0.0),
        solver=SolverConfig(kind="exhaustive"),
    )
    kept = suppress(None, dets, wide_open)
    preprocessed = [d for d in dets if d.score >= wide_open.preprocess.confidence_threshold]
    assert {identity(d) for d in kept} == {identity(d) for d in preprocessed}

    preset = PRESETS["confidence_soft"]
    for seed in (5, 23, 58):
        image, _, dets = synth_scene(seed, 6, 0.5, image_size=192)
        finals = []
        for method in ("qsqs", "qaqs", "qaqs_c"):
            cfg = SuppressionConfig(
                method=method,
                preprocess=preset["preprocess"],
                soft_score=preset["soft_score"],
                solver=SolverConfig(kind="exhaustive"),
            )
            kept = suppress(image, dets, cfg)
            n_pre = sum(1 for d in dets if d.score >= cfg.preprocess.confidence_threshold)
            assert len(kept) == n_pre  # this preset restores every suppressed box
            finals.append({identity(d) for d in kept})
        assert finals[0] == finals[1] == finals[2]


def test_7_evaluation_kit():
    """Echoed ground truth scores 1.0 on every applicable metric; the frozen
    three-image fixture matches its independent reference within 1e-6; the
    50%-threshold mean never falls below the all-threshold mean.
    """
    gts = [
        GroundTruth(box=BBox(10.0, 10.0, 50.0, 44.0), category=0, image=0),
        GroundTruth(box=BBox(60.0, 20.0, 100.0, 70.0), category=1, image=0),
        GroundTruth(box=BBox(15.0, 30.0, 70.0, 72.0), category=0, image=1),
    ]
    preds = [Detection(box=g.box, score=1.0, category=g.category, image=g.image) for g in gts]
    for name, value in evaluate(preds, gts).to_dict().items():
        assert value in (1.0, -1.0), name
    assert evaluate(preds, gts).map == 1.0

    d = DATA_DIR / "eval_reference"
    report = evaluate(
        load_detections(d / "detections.json"),
        load_groundtruth(d / "groundtruth.json"),
    ).to_dict()
    reference = json.loads((d / "reference.json").read_text())
    for name, value in reference.items():
        assert report[name] == pytest.approx(value, abs=1e-6), name

    rng = np.random.default_rng(777)
    for _ in range(20):
        seed = int(rng.integers(0, 10_000))
        _, gts, dets = synth_scene(seed, 6, 0.4, image_size=192, n_categories=2)
        rep = evaluate(dets, gts)
        assert rep.map_50 >= rep.map


def test_8_end_to_end_determinism(tmp_path):
    """synth -> suppress -> evaluate: byte-identical outputs across repeat
    runs and worker-pool sizes, under 30 s total.
    """
    start = time.perf_counter()
    scene = tmp_path / "scene"
    assert main([
        "synth", "--seed", "0", "--objects", "8", "--occlusion", "0.5",
        "--images", "3", "--image-size", "192", "--out", str(scene),
    ]) == 0
    outputs = []
    for tag, workers in (("a", "1"), ("b", "3"), ("c", "1")):
        kept = tmp_path / f"kept_{tag}.json"
        metrics = tmp_path / f"metrics_{tag}.json"
        assert main([
            "suppress", "--detections", str(scene / "detections.json"),
            "--images", str(scene), "--method", "qaqs_c",
            "--output", str(kept), "--workers", workers,
        ]) == 0
        assert main([
            "evaluate", "--predictions", str(kept),
            "--groundtruth", str(scene / "groundtruth.json"),
            "--report", str(metrics),
        ]) == 0
        outputs.append((kept.read_bytes(), metrics.read_bytes()))
    assert outputs[0] == outputs[1] == outputs[2]
    assert time.perf_counter() - start < 30.0
