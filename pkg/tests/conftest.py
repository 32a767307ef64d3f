"""Shared generators for the property tests."""

from pathlib import Path

import numpy as np

from qubosup.geometry import BBox

DATA_DIR = Path(__file__).parent / "data"


def random_boxes(rng, n, extent=100.0, min_side=3.0, max_side=30.0):
    """n random boxes inside [0, extent]^2.

    Side lengths up to max_side on a small canvas give a healthy mix of
    overlapping, nested, and disjoint pairs.
    """
    boxes = []
    for _ in range(n):
        w = rng.uniform(min_side, max_side)
        h = rng.uniform(min_side, max_side)
        x = rng.uniform(0.0, extent - max_side)
        y = rng.uniform(0.0, extent - max_side)
        boxes.append(BBox(x, y, x + w, y + h))
    return boxes


def random_patches(rng, n, dim):
    """Stack of n random grayscale patches as float64 arrays in [0, 1]."""
    return [rng.random((dim, dim)) for _ in range(n)]


def random_qubo(rng, n, density=1.0):
    """Random symmetric matrix with entries in [-1, 1], optionally sparsified."""
    q = rng.uniform(-1.0, 1.0, size=(n, n))
    q = (q + q.T) / 2.0
    if density < 1.0:
        mask = rng.random((n, n)) < density
        mask = np.triu(mask) | np.triu(mask).T
        np.fill_diagonal(mask, True)
        q = np.where(mask, q, 0.0)
    return q
