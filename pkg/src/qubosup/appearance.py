"""Structural similarity between detection crops.

Three routes produce appearance values:

* ``ssim_pair``     one pair of equal-sized patches, Gaussian-weighted
                    windows slid in valid mode (no padding),
* ``ssim_matrix_naive``   every pair, sequentially; the reference route,
* ``ssim_matrix_blocked`` the fast route: the index space is permuted to
  concentrate overlapping pairs near the diagonal, split recursively into
  four blocks, and blocks whose overlap sub-matrix is all zero are skipped
  outright.  Surviving blocks evaluate as one batch.

Per window the three comparison factors are

    l = (2*mx*my + C1) / (mx^2 + my^2 + C1)
    c = (2*sx*sy + C2) / (sx^2 + sy^2 + C2)
    s = (2*cov + C3)   / (2*sx*sy + C3)

and the patch score is the window mean of l*c*s.  Identical patches score
exactly 1.  Matrix entries are clamped to [0, 1].
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve1d

from .geometry import BBox, IntersectionMatrix
from .reorder import Permutation


@dataclass(frozen=True)
class SsimConfig:
    """Stabilizers, window shape and crop size for SSIM evaluation.

    c3 defaults to 2*c2 when left unset.  resize_dim must fit at least one
    window.
    """

    c1: float = 0.01**2
    c2: float = 0.03**2
    c3: float | None = None
    window_size: int = 11
    window_sigma: float = 1.5
    resize_dim: int = 48

    def __post_init__(self) -> None:
        if self.c3 is None:
            object.__setattr__(self, "c3", 2.0 * self.c2)
        if self.c1 <= 0 or self.c2 <= 0 or self.c3 <= 0:
            raise ValueError("stabilizers c1, c2, c3 must be positive")
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValueError(f"window_size must be odd and >= 3, got {self.window_size}")
        if self.window_sigma <= 0:
            raise ValueError(f"window_sigma must be positive, got {self.window_sigma}")
        if self.resize_dim < self.window_size:
            raise ValueError(
                f"resize_dim {self.resize_dim} smaller than window_size {self.window_size}"
            )


@dataclass(frozen=True)
class Patch:
    """Grayscale crop, row-major, intensities in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"patch must be a non-empty 2-D array, got shape {p.shape}")
        if p.size and (p.min() < 0.0 or p.max() > 1.0):
            raise ValueError("patch intensities must lie in [0, 1]")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class AppearanceMatrix:
    """Symmetric SSIM matrix with unit diagonal, entries clamped to [0, 1]."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"appearance matrix must be square, got shape {v.shape}")
        if not np.array_equal(v, v.T):
            raise ValueError("appearance matrix must be symmetric")
        if v.size and not np.all(np.diagonal(v) == 1.0):
            raise ValueError("appearance matrix diagonal must be all ones")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("appearance matrix entries must lie in [0, 1]")
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass
class BlockStats:
    """Instrumentation for the blocked route."""

    pairs_evaluated: int = 0
    blocks_evaluated: int = 0
    blocks_skipped: int = 0


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """1-D Gaussian taps at integer offsets, normalized to unit sum."""
    offsets = np.arange(size, dtype=np.float64) - size // 2
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    return g / g.sum()


def extract_patch(
    image: np.ndarray, box: BBox, cfg: SsimConfig, index: int | None = None
) -> Patch:
    """Crop a box from a grayscale raster and resample it to a square of
    side resize_dim with bilinear interpolation.  Aspect ratio is not
    preserved; a fixed square keeps every pair comparable and the window
    grid identical.

    The box is clipped to the image first.  A box entirely outside raises,
    carrying ``index`` when the caller supplies one.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"image must be 2-D grayscale, got shape {img.shape}")
    h, w = img.shape
    x1, y1 = max(box.x1, 0.0), max(box.y1, 0.0)
    x2, y2 = min(box.x2, float(w)), min(box.y2, float(h))
    if x1 >= x2 or y1 >= y2:
        tag = f"box {index}" if index is not None else "box"
        raise ValueError(
            f"{tag} ({box.x1}, {box.y1}, {box.x2}, {box.y2}) lies outside the "
            f"{w}x{h} image"
        )
    d = cfg.resize_dim
    # Continuous coordinate u maps to pixel-index space u - 0.5 (pixel k
    # covers [k, k+1) with center k + 0.5).
    us = x1 + (np.arange(d, dtype=np.float64) + 0.5) * (x2 - x1) / d - 0.5
    vs = y1 + (np.arange(d, dtype=np.float64) + 0.5) * (y2 - y1) / d - 0.5
    out = _bilinear_sample(img, vs, us)
    return Patch(np.clip(out, 0.0, 1.0))


def _bilinear_sample(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample img at the grid rows x cols with edge-clamped bilinear weights."""
    h, w = img.shape
    r = np.clip(rows, 0.0, h - 1.0)
    c = np.clip(cols, 0.0, w - 1.0)
    r0 = np.floor(r).astype(np.int64)
    c0 = np.floor(c).astype(np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (r - r0)[:, None]
    fc = (c - c0)[None, :]
    top = img[np.ix_(r0, c0)] * (1.0 - fc) + img[np.ix_(r0, c1)] * fc
    bot = img[np.ix_(r1, c0)] * (1.0 - fc) + img[np.ix_(r1, c1)] * fc
    return top * (1.0 - fr) + bot * fr


def _ssim_values_batch(x: np.ndarray, y: np.ndarray, cfg: SsimConfig) -> np.ndarray:
    """SSIM for a batch of pairs, shape (b, h, w) each, h and w >= window."""
    g = gaussian_window(cfg.window_size, cfg.window_sigma)
    r = cfg.window_size // 2

    def smooth(z: np.ndarray) -> np.ndarray:
        t = convolve1d(z, g, axis=-1, mode="constant")
        t = convolve1d(t, g, axis=-2, mode="constant")
        return t[..., r:-r, r:-r]

    mu_x = smooth(x)
    mu_y = smooth(y)
    var_x = np.maximum(smooth(x * x) - mu_x * mu_x, 0.0)
    var_y = np.maximum(smooth(y * y) - mu_y * mu_y, 0.0)
    cov = smooth(x * y) - mu_x * mu_y
    sigma_prod = np.sqrt(var_x * var_y)

    lum = (2.0 * mu_x * mu_y + cfg.c1) / (mu_x * mu_x + mu_y * mu_y + cfg.c1)
    con = (2.0 * sigma_prod + cfg.c2) / (var_x + var_y + cfg.c2)
    stru = (2.0 * cov + cfg.c3) / (2.0 * sigma_prod + cfg.c3)
    return (lum * con * stru).mean(axis=(-2, -1))


def ssim_pair(x: Patch, y: Patch, cfg: SsimConfig | None = None) -> float:
    """Mean SSIM over all valid window positions of two equal-sized patches.

    Bit-identical patches return exactly 1.0.
    """
    cfg = cfg or SsimConfig()
    if x.pixels.shape != y.pixels.shape:
        raise ValueError(f"patch size mismatch: {x.pixels.shape} vs {y.pixels.shape}")
    if x.height < cfg.window_size or x.width < cfg.window_size:
        raise ValueError(
            f"patch {x.pixels.shape} smaller than window {cfg.window_size}"
        )
    if np.array_equal(x.pixels, y.pixels):
        return 1.0
    return float(_ssim_values_batch(x.pixels[None], y.pixels[None], cfg)[0])


def ssim_matrix_naive(patches, cfg: SsimConfig | None = None) -> AppearanceMatrix:
    """Evaluate every pair sequentially.  The baseline the blocked route is
    checked against.
    """
    cfg = cfg or SsimConfig()
    n = len(patches)
    _check_uniform(patches, cfg)
    a = np.eye(n, dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            v = min(max(ssim_pair(patches[i], patches[j], cfg), 0.0), 1.0)
            a[i, j] = a[j, i] = v
    return AppearanceMatrix(a)


def ssim_matrix_blocked(
    patches,
    inter: IntersectionMatrix,
    perm: Permutation,
    cfg: SsimConfig | None = None,
    block_threshold: int = 8,
    workers: int | None = None,
    stats: BlockStats | None = None,
) -> AppearanceMatrix:
    """Divide-and-conquer SSIM over the permuted upper triangle.

    The permuted index square splits recursively into four blocks until the
    side is at most block_threshold.  Blocks under the diagonal fall away by
    symmetry, blocks whose permuted overlap sub-matrix is all zero are
    skipped, and the remaining blocks evaluate their pairs as one batch.
    Entries whose boxes do not overlap are exactly zero in the result.

    Worker count only spreads surviving blocks over threads; block results
    land at disjoint positions, so output is bit-identical for any count.
    """
    cfg = cfg or SsimConfig()
    n = len(patches)
    if inter.n != n:
        raise ValueError(f"intersection matrix n={inter.n} but {n} patches")
    if perm.n != n:
        raise ValueError(f"permutation n={perm.n} but {n} patches")
    if block_threshold < 1:
        raise ValueError(f"block_threshold must be >= 1, got {block_threshold}")
    _check_uniform(patches, cfg)

    order = perm.order
    ip = inter.bits[np.ix_(order, order)]
    a = np.eye(n, dtype=np.float64)

    blocks: list[tuple[np.ndarray, np.ndarray]] = []

    def visit(r0: int, r1: int, c0: int, c1: int) -> None:
        if r0 >= c1:
            return  # wholly below the diagonal, mirrored from above
        if max(r1 - r0, c1 - c0) <= block_threshold:
            ii, jj = np.meshgrid(
                np.arange(r0, r1), np.arange(c0, c1), indexing="ij"
            )
            keep = ii < jj
            pi, pj = ii[keep], jj[keep]
            if pi.size == 0:
                return
            if not ip[pi, pj].any():
                if stats is not None:
                    stats.blocks_skipped += 1
                return
            blocks.append((pi, pj))
            return
        rm = (r0 + r1) // 2
        cm = (c0 + c1) // 2
        visit(r0, rm, c0, cm)
        visit(r0, rm, cm, c1)
        visit(rm, r1, c0, cm)
        visit(rm, r1, cm, c1)

    if n:
        visit(0, n, 0, n)

    def eval_block(pair_idx: tuple[np.ndarray, np.ndarray]):
        pi, pj = pair_idx
        oi, oj = order[pi], order[pj]
        x = np.stack([patches[k].pixels for k in oi])
        y = np.stack([patches[k].pixels for k in oj])
        vals = np.clip(_ssim_values_batch(x, y, cfg), 0.0, 1.0)
        vals = np.where(ip[pi, pj] == 1, vals, 0.0)
        return oi, oj, vals

    if workers is not None and workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(eval_block, blocks))
    else:
        results = [eval_block(b) for b in blocks]

    for oi, oj, vals in results:
        a[oi, oj] = vals
        a[oj, oi] = vals
        if stats is not None:
            stats.pairs_evaluated += int(vals.size)
            stats.blocks_evaluated += 1
    return AppearanceMatrix(a)


def _check_uniform(patches, cfg: SsimConfig) -> None:
    shapes = {p.pixels.shape for p in patches}
    if len(shapes) > 1:
        raise ValueError(f"patches must share one size, got {sorted(shapes)}")
    for s in shapes:
        if s[0] < cfg.window_size or s[1] < cfg.window_size:
            raise ValueError(f"patch {s} smaller than window {cfg.window_size}")
