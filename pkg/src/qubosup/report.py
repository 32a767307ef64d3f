"""Run reports: per-image solver outcomes, stage wall-times, and the bench
artifacts (delimited table plus rendered figures).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .geometry import IntersectionMatrix
from .pipeline import STAGES, ImageReport
from .reorder import Permutation

STAGE_LABELS = {
    "patch_extract": "patch extraction",
    "ssim": "SSIM",
    "build": "matrix build",
    "solve": "solve",
    "soft_score": "soft-score",
}


@dataclass
class RunReport:
    """Everything observable about one suppression run."""

    method: str
    images: list[ImageReport] = field(default_factory=list)

    def stage_totals(self) -> dict[str, float]:
        totals = {s: 0.0 for s in STAGES}
        for img in self.images:
            for s in STAGES:
                totals[s] += img.stage_seconds.get(s, 0.0)
        return totals

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "images": [
                {
                    "image_id": img.image,
                    "categories": [
                        {
                            "category_id": c.category,
                            "n_input": c.n_input,
                            "n_preprocessed": c.n_preprocessed,
                            "n_kept": c.n_kept,
                            "solver_status": c.solver_status,
                        }
                        for c in img.categories
                    ],
                    "n_input": img.n_input,
                    "n_preprocessed": img.n_preprocessed,
                    "n_kept": img.n_kept,
                    "stage_seconds": {s: img.stage_seconds[s] for s in STAGES},
                }
                for img in sorted(self.images, key=lambda im: im.image)
            ],
            "stage_seconds_total": self.stage_totals(),
        }

    def write(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def write_bench_table(path: str | Path, reports: list[RunReport]) -> None:
    """Delimited per-method stage timing summary."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["method", "images", "total_ms"] + [f"{s}_ms" for s in STAGES]
        )
        for rep in reports:
            totals = rep.stage_totals()
            n = max(len(rep.images), 1)
            writer.writerow(
                [rep.method, len(rep.images), round(sum(totals.values()) / n * 1e3, 3)]
                + [round(totals[s] / n * 1e3, 3) for s in STAGES]
            )


def render_stage_breakdown(path: str | Path, reports: list[RunReport]) -> None:
    """Horizontal stacked bars of mean per-image wall time by stage."""
    methods = [r.method for r in reports]
    n_img = [max(len(r.images), 1) for r in reports]
    fig, ax = plt.subplots(figsize=(8, 1.0 + 0.6 * len(reports)))
    left = np.zeros(len(reports))
    for stage in STAGES:
        vals = np.array(
            [r.stage_totals()[stage] / n * 1e3 for r, n in zip(reports, n_img)]
        )
        ax.barh(methods, vals, left=left, label=STAGE_LABELS[stage])
        left += vals
    ax.set_xlabel("mean wall time per image [ms]")
    ax.legend(loc="lower right", frameon=False, fontsize=8)
    ax.grid(axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_overlap_structure(
    path: str | Path, inter: IntersectionMatrix, perm: Permutation
) -> None:
    """Side-by-side overlap matrix in input order and in permuted order."""
    permuted = inter.bits[np.ix_(perm.order, perm.order)]
    fig, axes = plt.subplots(1, 2, figsize=(8, 4))
    for ax, mat, title in (
        (axes[0], inter.bits, "input order"),
        (axes[1], permuted, "reordered"),
    ):
        ax.imshow(mat, interpolation="nearest")
        ax.set_title(title, fontsize=10)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
