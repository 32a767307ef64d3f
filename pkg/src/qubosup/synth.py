"""Seeded synthetic scenes: textured rectangles with controlled overlap,
plus detections derived from the ground truth by jitter and duplication.

Everything downstream of the seed is deterministic, so a scene can serve as
a frozen fixture.  Occlusion level 0 places every object in its own grid
cell (pairwise disjoint by construction); higher levels chain objects onto
their predecessors with partial overlap, which is what gives the overlap
structure a narrow band once reordered.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evalkit import GroundTruth
from .geometry import BBox
from .io import save_detections, save_groundtruth, save_image
from .pipeline import Detection


def _texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """One object's fill pattern.  Parameters come from the stream, so each
    object looks different from its neighbors but identical to itself.
    """
    kind = rng.integers(0, 4)
    base = rng.uniform(0.15, 0.85)
    amp = rng.uniform(0.1, 0.15)
    yy, xx = np.mgrid[0:h, 0:w]
    if kind == 0:  # oriented stripes
        wavelength = rng.uniform(4.0, 12.0)
        angle = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 2 * np.pi)
        carrier = (xx * np.cos(angle) + yy * np.sin(angle)) * (2 * np.pi / wavelength)
        tex = base + amp * np.sin(carrier + phase)
    elif kind == 1:  # checkerboard
        cell = int(rng.integers(3, 9))
        tex = base + amp * (((xx // cell) + (yy // cell)) % 2 * 2.0 - 1.0)
    elif kind == 2:  # smoothed noise
        noise = rng.random((h, w))
        for _ in range(2):
            noise = (
                noise
                + np.roll(noise, 1, 0) + np.roll(noise, -1, 0)
                + np.roll(noise, 1, 1) + np.roll(noise, -1, 1)
            ) / 5.0
        tex = base + amp * (noise - noise.mean()) * 4.0
    else:  # diagonal gradient
        span = (xx / max(w - 1, 1) + yy / max(h - 1, 1)) / 2.0
        tex = base + 2.0 * amp * (span - 0.5)
    return np.clip(tex, 0.0, 1.0)


def _jitter_box(
    rng: np.random.Generator, box: BBox, frac: float, image_size: int
) -> BBox:
    w = box.x2 - box.x1
    h = box.y2 - box.y1
    dx1, dy1, dx2, dy2 = rng.uniform(-frac, frac, size=4) * [w, h, w, h]
    x1 = min(max(box.x1 + dx1, 0.0), image_size - 2.0)
    y1 = min(max(box.y1 + dy1, 0.0), image_size - 2.0)
    x2 = max(min(box.x2 + dx2, float(image_size)), x1 + 2.0)
    y2 = max(min(box.y2 + dy2, float(image_size)), y1 + 2.0)
    return BBox(x1, y1, x2, y2)


def synth_scene(
    seed: int,
    n_objects: int,
    occlusion_level: float,
    image_size: int = 256,
    n_categories: int = 1,
    image_id: int = 0,
) -> tuple[np.ndarray, list[GroundTruth], list[Detection]]:
    """Render one scene and derive detections for it.

    Each object yields one close detection plus zero to two sloppier
    duplicates with decayed scores; detection order is shuffled.  Returns
    (grayscale image in [0, 1], ground truth, detections).
    """
    if not (0.0 <= occlusion_level <= 1.0):
        raise ValueError(f"occlusion_level must lie in [0, 1], got {occlusion_level}")
    if n_objects < 1:
        raise ValueError(f"n_objects must be >= 1, got {n_objects}")
    rng = np.random.default_rng(seed)

    grid = int(np.ceil(np.sqrt(n_objects)))
    cell = image_size // grid
    if cell < 12:
        raise ValueError(
            f"{n_objects} objects do not fit a {image_size}px image; enlarge it"
        )
    cells = [(r, c) for r in range(grid) for c in range(grid)]
    rng.shuffle(cells)

    boxes: list[BBox] = []
    next_cell = 0
    for k in range(n_objects):
        chained = k > 0 and rng.random() < occlusion_level
        if chained:
            host = boxes[-1]
            hw = host.x2 - host.x1
            hh = host.y2 - host.y1
            # Shift by roughly half the host extent: real overlap, never a copy.
            shift = rng.uniform(0.4, 0.7)
            sx = shift * hw * (1 if rng.random() < 0.5 else -1)
            sy = shift * hh * (1 if rng.random() < 0.5 else -1)
            scale = rng.uniform(0.85, 1.15)
            w = hw * scale
            h = hh * scale
            x1 = min(max(host.x1 + sx, 0.0), image_size - w - 1.0)
            y1 = min(max(host.y1 + sy, 0.0), image_size - h - 1.0)
            if x1 >= 0.0 and y1 >= 0.0:
                boxes.append(BBox(x1, y1, x1 + w, y1 + h))
                continue
            chained = False  # fell off the canvas; place freely instead
        r, c = cells[next_cell % len(cells)]
        next_cell += 1
        margin = max(cell * 0.08, 1.0)
        w = rng.uniform(0.45, 0.8) * (cell - 2 * margin)
        h = rng.uniform(0.45, 0.8) * (cell - 2 * margin)
        x1 = c * cell + margin + rng.uniform(0.0, cell - 2 * margin - w)
        y1 = r * cell + margin + rng.uniform(0.0, cell - 2 * margin - h)
        boxes.append(BBox(x1, y1, x1 + w, y1 + h))

    canvas = np.full((image_size, image_size), 0.5)
    canvas += 0.02 * (rng.random((image_size, image_size)) - 0.5)
    for box in boxes:
        ix1, iy1 = int(round(box.x1)), int(round(box.y1))
        ix2, iy2 = int(round(box.x2)), int(round(box.y2))
        ix2, iy2 = max(ix2, ix1 + 1), max(iy2, iy1 + 1)
        canvas[iy1:iy2, ix1:ix2] = _texture(rng, iy2 - iy1, ix2 - ix1)
    canvas = np.clip(canvas, 0.0, 1.0)

    gts = [
        GroundTruth(box=b, category=k % n_categories, image=image_id)
        for k, b in enumerate(boxes)
    ]

    dets: list[Detection] = []
    for k, b in enumerate(boxes):
        cat = k % n_categories
        primary = rng.uniform(0.55, 0.98)
        dets.append(
            Detection(
                box=_jitter_box(rng, b, 0.03, image_size),
                score=primary,
                category=cat,
                image=image_id,
            )
        )
        for _ in range(int(rng.integers(0, 3))):
            dets.append(
                Detection(
                    box=_jitter_box(rng, b, 0.12, image_size),
                    score=float(np.clip(primary * rng.uniform(0.3, 0.9), 0.01, 1.0)),
                    category=cat,
                    image=image_id,
                )
            )
    order = rng.permutation(len(dets))
    dets = [dets[i] for i in order]
    return canvas, gts, dets


@dataclass
class SceneFiles:
    image_paths: list[Path]
    detections_path: Path
    groundtruth_path: Path


def write_scene(
    out_dir: str | Path,
    seed: int,
    n_objects: int,
    occlusion_level: float,
    image_size: int = 256,
    n_categories: int = 1,
    n_images: int = 1,
) -> SceneFiles:
    """Render one or more images into a scene directory.

    Produces <id>.png per image plus one detections.json and one
    groundtruth.json covering all of them.  Image k uses seed + k.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    all_gts: list[GroundTruth] = []
    all_dets: list[Detection] = []
    image_paths = []
    for k in range(n_images):
        image, gts, dets = synth_scene(
            seed + k, n_objects, occlusion_level, image_size, n_categories, image_id=k
        )
        p = out / f"{k}.png"
        save_image(p, image)
        image_paths.append(p)
        all_gts += gts
        all_dets += dets
    det_path = out / "detections.json"
    gt_path = out / "groundtruth.json"
    save_detections(det_path, all_dets)
    save_groundtruth(gt_path, all_gts)
    return SceneFiles(image_paths, det_path, gt_path)
