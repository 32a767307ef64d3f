"""SSIM between crops: single pairs, the naive matrix, and the blocked route.

The reference below recomputes SSIM window by window with explicit slices
and centered moments, deliberately not sharing any arithmetic with the
package's separable-convolution path.
"""

import math

import numpy as np
import pytest

from conftest import random_boxes, random_patches
from qubosup.appearance import (
    AppearanceMatrix,
    BlockStats,
    Patch,
    SsimConfig,
    extract_patch,
    gaussian_window,
    ssim_matrix_blocked,
    ssim_matrix_naive,
    ssim_pair,
)
from qubosup.geometry import IntersectionMatrix, intersection_matrix
from qubosup.reorder import Permutation, identity_permutation, rcm_order
from qubosup.synth import synth_scene


def reference_ssim(x, y, cfg):
    """Windowed SSIM oracle: explicit loops over window positions, centered
    moments accumulated directly."""
    size = cfg.window_size
    half = size // 2
    g = [math.exp(-((k - half) ** 2) / (2.0 * cfg.window_sigma**2)) for k in range(size)]
    norm = sum(g)
    w = np.outer(g, g) / (norm * norm)

    h, wd = x.shape
    total = 0.0
    count = 0
    for top in range(h - size + 1):
        for left in range(wd - size + 1):
            wx = x[top : top + size, left : left + size]
            wy = y[top : top + size, left : left + size]
            mx = float((w * wx).sum())
            my = float((w * wy).sum())
            vx = float((w * (wx - mx) ** 2).sum())
            vy = float((w * (wy - my) ** 2).sum())
            cov = float((w * (wx - mx) * (wy - my)).sum())
            sx, sy = math.sqrt(vx), math.sqrt(vy)
            lum = (2 * mx * my + cfg.c1) / (mx * mx + my * my + cfg.c1)
            con = (2 * sx * sy + cfg.c2) / (vx + vy + cfg.c2)
            stru = (2 * cov + cfg.c3) / (2 * sx * sy + cfg.c3)
            total += lum * con * stru
            count += 1
    return total / count


class TestSsimConfig:
    def test_c3_defaults_to_twice_c2(self):
        cfg = SsimConfig()
        assert cfg.c3 == 2 * 0.03**2

    def test_validation(self):
        with pytest.raises(ValueError):
            SsimConfig(window_size=10)  # even
        with pytest.raises(ValueError):
            SsimConfig(window_size=1)
        with pytest.raises(ValueError):
            SsimConfig(resize_dim=9, window_size=11)
        with pytest.raises(ValueError):
            SsimConfig(c2=0.0)


class TestPatch:
    def test_rejects_out_of_range_intensities(self):
        with pytest.raises(ValueError):
            Patch(np.full((4, 4), 1.5))

    def test_pixels_are_frozen(self):
        p = Patch(np.zeros((4, 4)))
        with pytest.raises(ValueError):
            p.pixels[0, 0] = 1.0


class TestSsimPair:
    def test_identical_patches_score_exactly_one(self):
        rng = np.random.default_rng(7)
        p = Patch(rng.random((16, 16)))
        q = Patch(p.pixels.copy())
        assert ssim_pair(p, q, SsimConfig(resize_dim=16)) == 1.0

    def test_flat_black_vs_flat_white(self):
        """Zero variance everywhere: contrast and structure terms collapse
        to 1 and only the luminance stabilizer survives."""
        cfg = SsimConfig(resize_dim=16)
        x = Patch(np.zeros((16, 16)))
        y = Patch(np.ones((16, 16)))
        expected = cfg.c1 / (1.0 + cfg.c1)
        assert ssim_pair(x, y, cfg) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(9.999e-5, rel=1e-3)

    def test_matches_reference_on_fixed_random_patches(self):
        rng = np.random.default_rng(42)
        cfg = SsimConfig()
        x = Patch(rng.random((48, 48)))
        y = Patch(rng.random((48, 48)))
        got = ssim_pair(x, y, cfg)
        want = reference_ssim(x.pixels, y.pixels, cfg)
        assert got == pytest.approx(want, abs=1e-9)

    def test_matches_reference_on_correlated_patches(self):
        # correlated pair exercises the structure term away from zero
        rng = np.random.default_rng(43)
        cfg = SsimConfig(resize_dim=24)
        base = rng.random((24, 24))
        noisy = np.clip(base + rng.normal(0, 0.05, base.shape), 0.0, 1.0)
        got = ssim_pair(Patch(base), Patch(noisy), cfg)
        want = reference_ssim(base, noisy, cfg)
        assert got == pytest.approx(want, abs=1e-9)
        assert got > 0.5

    def test_symmetry_and_upper_bound(self):
        rng = np.random.default_rng(44)
        cfg = SsimConfig(resize_dim=16)
        for _ in range(10):
            x = Patch(rng.random((16, 16)))
            y = Patch(rng.random((16, 16)))
            assert ssim_pair(x, y, cfg) == ssim_pair(y, x, cfg)
            assert ssim_pair(x, y, cfg) <= 1.0

    def test_shape_mismatch_reports_both(self):
        with pytest.raises(ValueError, match=r"16.*12|12.*16"):
            ssim_pair(Patch(np.zeros((16, 16))), Patch(np.zeros((12, 12))),
                      SsimConfig(resize_dim=12))


class TestGaussianWindow:
    def test_normalized_and_symmetric(self):
        g = gaussian_window(11, 1.5)
        assert g.sum() == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(g, g[::-1], atol=0)
        assert g.argmax() == 5


class TestExtractPatch:
    def test_identity_resample(self):
        rng = np.random.default_rng(11)
        img = rng.random((48, 48))
        from qubosup.geometry import BBox

        p = extract_patch(img, BBox(0, 0, 48, 48), SsimConfig())
        np.testing.assert_allclose(p.pixels, img, atol=1e-12)

    def test_constant_image(self):
        from qubosup.geometry import BBox

        img = np.full((32, 32), 0.625)
        p = extract_patch(img, BBox(3.5, 4.2, 20.0, 17.3), SsimConfig(resize_dim=12))
        np.testing.assert_allclose(p.pixels, 0.625, atol=1e-12)

    def test_checkerboard_bilinear_weights(self):
        """2x2 checkerboard to 4x4: sample centers fall at -0.25, 0.25,
        0.75, 1.25 in source space, so the corners clamp and the interior
        mixes with weights 3/4 and 1/4."""
        from qubosup.geometry import BBox

        img = np.array([[1.0, 0.0], [0.0, 1.0]])
        p = extract_patch(img, BBox(0, 0, 2, 2), SsimConfig(resize_dim=4, window_size=3))
        expected = np.array(
            [
                [1.0, 0.75, 0.25, 0.0],
                [0.75, 0.625, 0.375, 0.25],
                [0.25, 0.375, 0.625, 0.75],
                [0.0, 0.25, 0.75, 1.0],
            ]
        )
        np.testing.assert_allclose(p.pixels, expected, atol=1e-12)

    def test_box_clipped_to_image(self):
        from qubosup.geometry import BBox

        img = np.full((20, 20), 0.25)
        p = extract_patch(img, BBox(-5, -5, 10, 10), SsimConfig(resize_dim=12))
        np.testing.assert_allclose(p.pixels, 0.25, atol=1e-12)

    def test_outside_box_raises_with_index(self):
        from qubosup.geometry import BBox

        img = np.zeros((20, 20))
        with pytest.raises(ValueError, match="box 3"):
            extract_patch(img, BBox(30, 30, 40, 40), SsimConfig(), index=3)


class TestNaiveMatrix:
    def test_empty(self):
        m = ssim_matrix_naive([], SsimConfig(resize_dim=16))
        assert m.values.shape == (0, 0)

    def test_identical_pair(self):
        p = Patch(np.linspace(0, 1, 256).reshape(16, 16))
        m = ssim_matrix_naive([p, Patch(p.pixels.copy())], SsimConfig(resize_dim=16))
        np.testing.assert_array_equal(m.values, np.ones((2, 2)))

    def test_random_patches_structure(self):
        rng = np.random.default_rng(13)
        ps = [Patch(a) for a in random_patches(rng, 5, 16)]
        m = ssim_matrix_naive(ps, SsimConfig(resize_dim=16))
        assert np.array_equal(m.values, m.values.T)
        assert np.all(np.diagonal(m.values) == 1.0)
        assert np.all(m.values <= 1.0) and np.all(m.values >= 0.0)

    def test_mixed_sizes_rejected(self):
        with pytest.raises(ValueError):
            ssim_matrix_naive(
                [Patch(np.zeros((16, 16))), Patch(np.zeros((12, 12)))],
                SsimConfig(resize_dim=12),
            )


def scene_inputs(rng, n, dim=24):
    """Boxes with realistic overlap structure plus random patch content."""
    boxes = random_boxes(rng, n, extent=80.0)
    inter = intersection_matrix(boxes)
    patches = [Patch(a) for a in random_patches(rng, n, dim)]
    return inter, patches, SsimConfig(resize_dim=dim)


class TestBlockedMatrix:
    def test_no_overlaps_means_no_evaluations(self):
        rng = np.random.default_rng(14)
        n = 9
        inter = IntersectionMatrix(np.eye(n, dtype=np.uint8))
        patches = [Patch(a) for a in random_patches(rng, n, 16)]
        stats = BlockStats()
        m = ssim_matrix_blocked(
            patches, inter, identity_permutation(n), SsimConfig(resize_dim=16),
            stats=stats,
        )
        np.testing.assert_array_equal(m.values, np.eye(n))
        assert stats.pairs_evaluated == 0

    def test_all_ones_matches_naive_exactly(self):
        rng = np.random.default_rng(15)
        n = 13
        cfg = SsimConfig(resize_dim=16)
        patches = [Patch(a) for a in random_patches(rng, n, 16)]
        inter = IntersectionMatrix(np.ones((n, n), dtype=np.uint8))
        naive = ssim_matrix_naive(patches, cfg)
        blocked = ssim_matrix_blocked(patches, inter, identity_permutation(n), cfg)
        np.testing.assert_array_equal(blocked.values, naive.values)

    def test_equivalence_on_random_scenes(self):
        """Blocked equals naive on every overlapping pair; omitted pairs are
        exactly zero."""
        rng = np.random.default_rng(16)
        for _ in range(8):
            n = int(rng.integers(2, 40))
            inter, patches, cfg = scene_inputs(rng, n)
            naive = ssim_matrix_naive(patches, cfg)
            perm = rcm_order(inter)
            blocked = ssim_matrix_blocked(patches, inter, perm, cfg)
            on = inter.bits.astype(bool)
            np.testing.assert_allclose(
                blocked.values[on], naive.values[on], atol=1e-9
            )
            assert np.all(blocked.values[~on] == 0.0)

    def test_threshold_one_evaluates_exactly_the_overlap_pairs(self):
        rng = np.random.default_rng(17)
        inter, patches, cfg = scene_inputs(rng, 21)
        stats = BlockStats()
        ssim_matrix_blocked(
            patches, inter, rcm_order(inter), cfg, block_threshold=1, stats=stats
        )
        upper = np.triu(inter.bits, k=1).sum()
        assert stats.pairs_evaluated == int(upper)

    def test_evaluation_count_never_exceeds_all_pairs(self):
        rng = np.random.default_rng(18)
        for _ in range(6):
            n = int(rng.integers(2, 30))
            inter, patches, cfg = scene_inputs(rng, n)
            stats = BlockStats()
            ssim_matrix_blocked(patches, inter, rcm_order(inter), cfg, stats=stats)
            assert stats.pairs_evaluated <= n * (n - 1) // 2

    def test_crowded_scene_blocked_beats_all_pairs(self):
        """Pinned regression on the crowded synthetic scene: the reorder
        plus omission route evaluates far fewer pairs and still agrees with
        the naive reference on every overlapping pair."""
        img, gts, _ = synth_scene(seed=7, n_objects=64, occlusion_level=0.6, image_size=512)
        boxes = [g.box for g in gts]
        cfg = SsimConfig()
        patches = [extract_patch(img, b, cfg, index=i) for i, b in enumerate(boxes)]
        inter = intersection_matrix(boxes)
        stats = BlockStats()
        blocked = ssim_matrix_blocked(patches, inter, rcm_order(inter), cfg, stats=stats)
        n = len(boxes)
        assert stats.pairs_evaluated < n * (n - 1) // 2
        naive = ssim_matrix_naive(patches, cfg)
        on = inter.bits.astype(bool)
        np.testing.assert_allclose(blocked.values[on], naive.values[on], atol=1e-9)

    def test_worker_count_is_invisible(self):
        rng = np.random.default_rng(19)
        inter, patches, cfg = scene_inputs(rng, 32)
        perm = rcm_order(inter)
        base = ssim_matrix_blocked(patches, inter, perm, cfg)
        for workers in (1, 2, 5):
            m = ssim_matrix_blocked(patches, inter, perm, cfg, workers=workers)
            np.testing.assert_array_equal(m.values, base.values)

    def test_size_mismatches_rejected(self):
        rng = np.random.default_rng(20)
        inter, patches, cfg = scene_inputs(rng, 6)
        with pytest.raises(ValueError):
            ssim_matrix_blocked(patches[:5], inter, identity_permutation(6), cfg)
        with pytest.raises(ValueError):
            ssim_matrix_blocked(patches, inter, identity_permutation(5), cfg)
        with pytest.raises(ValueError):
            ssim_matrix_blocked(patches, inter, identity_permutation(6), cfg,
                                block_threshold=0)


class TestAppearanceMatrixValidation:
    def test_rejects_asymmetry_and_bad_diagonal(self):
        with pytest.raises(ValueError):
            AppearanceMatrix(np.array([[1.0, 0.3], [0.2, 1.0]]))
        with pytest.raises(ValueError):
            AppearanceMatrix(np.array([[0.9, 0.3], [0.3, 1.0]]))
        with pytest.raises(ValueError):
            AppearanceMatrix(np.array([[1.0, 1.2], [1.2, 1.0]]))
