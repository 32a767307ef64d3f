"""Command-line interface.

Subcommands:

* ``suppress``  run suppression over a detection file, image by image
* ``evaluate``  score predictions against ground truth
* ``synth``     render a seeded synthetic scene with detections
* ``bench``     time each method on a scene; writes a CSV table and figures

Multi-image work is spread over a thread pool; results are merged in image
order, so output bytes do not depend on the pool size.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import io as qio
from .evalkit import evaluate
from .geometry import intersection_matrix
from .pipeline import (
    APPEARANCE_METHODS,
    METHODS,
    ImageReport,
    SuppressionConfig,
    suppress,
)
from .reorder import rcm_order
from .report import (
    RunReport,
    render_overlap_structure,
    render_stage_breakdown,
    write_bench_table,
)
from .synth import write_scene


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qubosup",
        description="QUBO-based suppression of redundant detections",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("suppress", help="suppress redundant detections")
    p.add_argument("--detections", required=True, help="input detection JSON")
    p.add_argument("--images", help="directory holding <image_id>.<ext> rasters")
    p.add_argument("--method", choices=METHODS, help="override the configured method")
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--output", required=True, help="where to write kept detections")
    p.add_argument("--report", help="where to write the run report JSON")
    p.add_argument("--workers", type=int, default=1, help="image-level thread pool size")

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--predictions", required=True)
    p.add_argument("--groundtruth", required=True)
    p.add_argument("--report", help="also write the metrics as JSON")

    p = sub.add_parser("synth", help="render a synthetic scene")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--objects", type=int, required=True)
    p.add_argument("--occlusion", type=float, required=True)
    p.add_argument("--out", required=True, help="scene directory to create")
    p.add_argument("--image-size", type=int, default=256)
    p.add_argument("--images", type=int, default=1, help="number of images to render")
    p.add_argument("--categories", type=int, default=1)

    p = sub.add_parser("bench", help="time suppression methods on a scene")
    p.add_argument("--scene", required=True, help="directory written by synth")
    p.add_argument("--methods", required=True, help="comma-separated method list")
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--out", help="output directory (default: <scene>/bench)")
    return parser


def _load_run_config(path: str | None, method: str | None) -> SuppressionConfig:
    cfg = qio.load_config(path) if path else SuppressionConfig()
    if method:
        cfg = dataclasses.replace(cfg, method=method)
    return cfg


def _suppress_one(args_tuple):
    image_id, dets, images_dir, cfg = args_tuple
    image = None
    if images_dir is not None:
        image = qio.load_image(qio.find_image(images_dir, image_id))
    elif cfg.method in APPEARANCE_METHODS:
        raise ValueError(
            f"method {cfg.method!r} needs --images to score appearance"
        )
    report = ImageReport(image=image_id, method=cfg.method)
    kept = suppress(image, dets, cfg, report)
    return image_id, kept, report


def _run_suppression(
    dets, images_dir, cfg: SuppressionConfig, workers: int
) -> tuple[list, RunReport]:
    by_image: dict[int, list] = {}
    for d in dets:
        by_image.setdefault(d.image, []).append(d)
    tasks = [
        (image_id, by_image[image_id], images_dir, cfg)
        for image_id in sorted(by_image)
    ]
    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_suppress_one, tasks))
    else:
        results = [_suppress_one(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    run = RunReport(method=cfg.method)
    merged = []
    for _, kept, report in results:
        merged += kept
        run.images.append(report)
    return merged, run


def _cmd_suppress(args) -> int:
    cfg = _load_run_config(args.config, args.method)
    dets = qio.load_detections(args.detections)
    kept, run = _run_suppression(dets, args.images, cfg, args.workers)
    qio.save_detections(args.output, kept)
    if args.report:
        run.write(args.report)
    print(f"kept {len(kept)} of {len(dets)} detections ({cfg.method})")
    return 0


def _cmd_evaluate(args) -> int:
    preds = qio.load_detections(args.predictions)
    gts = qio.load_groundtruth(args.groundtruth)
    report = evaluate(preds, gts)
    for name, value in report.to_dict().items():
        print(f"{name:8s} {value:.4f}")
    if args.report:
        with open(args.report, "w") as f:
            json.dump(report.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
    return 0


def _cmd_synth(args) -> int:
    files = write_scene(
        args.out,
        seed=args.seed,
        n_objects=args.objects,
        occlusion_level=args.occlusion,
        image_size=args.image_size,
        n_categories=args.categories,
        n_images=args.images,
    )
    print(
        f"wrote {len(files.image_paths)} image(s), {files.detections_path.name}, "
        f"{files.groundtruth_path.name} under {Path(args.out)}"
    )
    return 0


def _cmd_bench(args) -> int:
    scene = Path(args.scene)
    out_dir = Path(args.out) if args.out else scene / "bench"
    out_dir.mkdir(parents=True, exist_ok=True)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}, expected one of {METHODS}")
    dets = qio.load_detections(scene / "detections.json")
    reports = []
    for m in methods:
        cfg = _load_run_config(args.config, m)
        _, run = _run_suppression(dets, scene, cfg, workers=1)
        reports.append(run)
        run.write(out_dir / f"report_{m}.json")
    write_bench_table(out_dir / "bench.csv", reports)
    render_stage_breakdown(out_dir / "stage_breakdown.png", reports)

    # Overlap structure of the busiest image, before and after reordering.
    by_image: dict[int, list] = {}
    for d in dets:
        by_image.setdefault(d.image, []).append(d)
    busiest = max(by_image, key=lambda k: len(by_image[k]))
    inter = intersection_matrix([d.box for d in by_image[busiest]])
    render_overlap_structure(out_dir / "overlap_structure.png", inter, rcm_order(inter))

    print((out_dir / "bench.csv").read_text().rstrip())
    print(f"artifacts under {out_dir}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "suppress": _cmd_suppress,
        "evaluate": _cmd_evaluate,
        "synth": _cmd_synth,
        "bench": _cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
