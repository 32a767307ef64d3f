"""File formats: detection and ground-truth JSON, grayscale rasters, and the
flat key=value run configuration.

The wire convention for boxes is COCO-like (x, y, width, height); corners
exist only inside the library.  Rasters load as float64 grayscale in [0, 1],
color inputs collapsing through the BT.601 luma weights.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .appearance import SsimConfig
from .geometry import BBox
from .pipeline import (
    METHODS,
    PRESETS,
    Detection,
    PreprocessConfig,
    SoftScoreConfig,
    SuppressionConfig,
)
from .evalkit import GroundTruth
from .qubo import PAIRWISE_MODES, Weights
from .solvers import AnnealingSchedule, SolverConfig

IMAGE_EXTENSIONS = (".png", ".bmp", ".pgm", ".tif", ".tiff")


def _require(record: dict, key: str, idx: int, kind: str):
    if key not in record:
        raise ValueError(f"{kind}[{idx}]: missing field {key!r}")
    return record[key]


def _parse_bbox(raw, idx: int, kind: str) -> BBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise ValueError(f"{kind}[{idx}]: bbox must be [x, y, width, height], got {raw!r}")
    x, y, w, h = (float(v) for v in raw)
    if w <= 0 or h <= 0:
        raise ValueError(f"{kind}[{idx}]: bbox extent must be positive, got w={w}, h={h}")
    return BBox.from_xywh(x, y, w, h)


def _parse_int(raw, idx: int, kind: str, key: str) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ValueError(f"{kind}[{idx}]: {key} must be an integer, got {raw!r}")
    return raw


def load_detections(path: str | Path) -> list[Detection]:
    """Read a detection JSON file (a list of records)."""
    with open(path) as f:
        data = json.load(f)
    if not isinstance(data, list):
        raise ValueError(f"{path}: detection file must hold a JSON list")
    out = []
    for i, rec in enumerate(data):
        box = _parse_bbox(_require(rec, "bbox", i, "detections"), i, "detections")
        score = float(_require(rec, "score", i, "detections"))
        if not (0.0 < score <= 1.0):
            raise ValueError(f"detections[{i}]: score must lie in (0, 1], got {score}")
        out.append(
            Detection(
                box=box,
                score=score,
                category=_parse_int(_require(rec, "category_id", i, "detections"), i, "detections", "category_id"),
                image=_parse_int(_require(rec, "image_id", i, "detections"), i, "detections", "image_id"),
            )
        )
    return out


def save_detections(path: str | Path, dets: list[Detection]) -> None:
    data = [
        {
            "image_id": d.image,
            "category_id": d.category,
            "bbox": list(d.box.to_xywh()),
            "score": d.score,
        }
        for d in dets
    ]
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def load_groundtruth(path: str | Path) -> list[GroundTruth]:
    """Read a ground-truth JSON file; scores, if present, are ignored."""
    with open(path) as f:
        data = json.load(f)
    if not isinstance(data, list):
        raise ValueError(f"{path}: ground-truth file must hold a JSON list")
    out = []
    for i, rec in enumerate(data):
        out.append(
            GroundTruth(
                box=_parse_bbox(_require(rec, "bbox", i, "groundtruth"), i, "groundtruth"),
                category=_parse_int(_require(rec, "category_id", i, "groundtruth"), i, "groundtruth", "category_id"),
                image=_parse_int(_require(rec, "image_id", i, "groundtruth"), i, "groundtruth", "image_id"),
            )
        )
    return out


def save_groundtruth(path: str | Path, gts: list[GroundTruth]) -> None:
    data = [
        {"image_id": g.image, "category_id": g.category, "bbox": list(g.box.to_xywh())}
        for g in gts
    ]
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def load_image(path: str | Path) -> np.ndarray:
    """Decode a raster to float64 grayscale in [0, 1].

    Color images collapse via the BT.601 weights (0.299, 0.587, 0.114).
    """
    with Image.open(path) as img:
        gray = img.convert("L")  # ITU-R 601-2 luma transform
        arr = np.asarray(gray, dtype=np.float64)
    return arr / 255.0


def save_image(path: str | Path, image: np.ndarray) -> None:
    """Write a [0, 1] grayscale array as an 8-bit PNG."""
    arr = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def find_image(images_dir: str | Path, image_id: int) -> Path:
    """Locate <dir>/<image_id>.<ext> among the supported raster types."""
    d = Path(images_dir)
    for ext in IMAGE_EXTENSIONS:
        p = d / f"{image_id}{ext}"
        if p.exists():
            return p
    raise FileNotFoundError(
        f"no raster for image {image_id} under {d} (tried {', '.join(IMAGE_EXTENSIONS)})"
    )


# --- run configuration ------------------------------------------------------

_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}

_CONFIG_KEYS = (
    "preset", "method", "w1", "w2", "w3", "pairwise_mode",
    "preprocess", "confidence_threshold", "preprocess_nms_threshold",
    "soft_score", "soft_score_sigma", "soft_score_o_t",
    "nms_iou_threshold", "soft_nms_sigma", "soft_nms_floor",
    "solver", "time_budget", "seed", "sweeps", "t_initial", "t_final",
    "ssim_window_size", "ssim_window_sigma", "ssim_resize_dim", "block_threshold",
)


def parse_config(text: str) -> SuppressionConfig:
    """Parse the flat key = value run configuration.

    Blank lines and ``#`` comments are skipped.  A ``preset`` line selects a
    preprocessing regime (confidence, confidence_soft, nms, nms_soft);
    explicit keys override whatever the preset set.
    """
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in pairs:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return build_config(pairs)


def load_config(path: str | Path) -> SuppressionConfig:
    return parse_config(Path(path).read_text())


def _as_float(pairs: dict, key: str, default: float) -> float:
    return float(pairs[key]) if key in pairs else default


def _as_int(pairs: dict, key: str, default: int | None) -> int | None:
    return int(pairs[key]) if key in pairs else default


def _as_bool(pairs: dict, key: str, default: bool) -> bool:
    if key not in pairs:
        return default
    v = pairs[key].lower()
    if v not in _BOOL_VALUES:
        raise ValueError(f"config key {key!r}: expected a boolean, got {pairs[key]!r}")
    return _BOOL_VALUES[v]


def build_config(pairs: dict[str, str]) -> SuppressionConfig:
    """Assemble a SuppressionConfig from string key-value pairs."""
    pairs = dict(pairs)
    preprocess = PreprocessConfig()
    soft: SoftScoreConfig | None = None
    if "preset" in pairs:
        name = pairs.pop("preset")
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
        preset = PRESETS[name]
        preprocess = preset["preprocess"]
        soft = preset["soft_score"]

    kind = pairs.get("preprocess", preprocess.kind)
    preprocess = PreprocessConfig(
        kind=kind,
        confidence_threshold=_as_float(
            pairs, "confidence_threshold", preprocess.confidence_threshold
        ),
        nms_iou_threshold=_as_float(
            pairs, "preprocess_nms_threshold", preprocess.nms_iou_threshold
        ),
    )

    want_soft = _as_bool(pairs, "soft_score", soft is not None)
    if want_soft:
        base = soft or SoftScoreConfig()
        soft = SoftScoreConfig(
            sigma=_as_float(pairs, "soft_score_sigma", base.sigma),
            o_t=_as_float(pairs, "soft_score_o_t", base.o_t),
        )
    else:
        soft = None

    method = pairs.get("method", "qsqs")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    mode = pairs.get("pairwise_mode", "iou")
    if mode not in PAIRWISE_MODES:
        raise ValueError(f"unknown pairwise_mode {mode!r}, expected one of {PAIRWISE_MODES}")

    weights = Weights(
        _as_float(pairs, "w1", 0.4),
        _as_float(pairs, "w2", 0.3),
        _as_float(pairs, "w3", 0.3),
    )

    schedule = AnnealingSchedule(
        t_initial=_as_float(pairs, "t_initial", 2.0),
        t_final=_as_float(pairs, "t_final", 0.01),
        sweeps=_as_int(pairs, "sweeps", 10_000),
    )
    solver = SolverConfig(
        kind=pairs.get("solver", "branch_and_bound"),
        time_budget=_as_float(pairs, "time_budget", 60.0),
        seed=_as_int(pairs, "seed", None),
        schedule=schedule,
    )

    ssim = SsimConfig(
        window_size=_as_int(pairs, "ssim_window_size", 11),
        window_sigma=_as_float(pairs, "ssim_window_sigma", 1.5),
        resize_dim=_as_int(pairs, "ssim_resize_dim", 48),
    )

    return SuppressionConfig(
        method=method,
        weights=weights,
        pairwise_mode=mode,
        preprocess=preprocess,
        soft_score=soft,
        nms_iou_threshold=_as_float(pairs, "nms_iou_threshold", 0.3),
        soft_nms_sigma=_as_float(pairs, "soft_nms_sigma", 0.5),
        soft_nms_floor=_as_float(pairs, "soft_nms_floor", 0.001),
        block_threshold=_as_int(pairs, "block_threshold", 8),
        solver=solver,
        ssim=ssim,
    )
