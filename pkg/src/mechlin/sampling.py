"""Quasi-random sampling of configuration boxes."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import qmc


def sobol_points(box, count: int, seed: int = 0) -> np.ndarray:
    """Scrambled Sobol points in an axis-aligned box given as (n, 2) [lo, hi] rows."""
    box = np.asarray(box, dtype=float)
    n = box.shape[0]
    lo, hi = box[:, 0], box[:, 1]
    if not np.all(np.isfinite(box)):
        raise ValueError("cannot sample an unbounded box")
    sampler = qmc.Sobol(d=n, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u = sampler.random(count)
    return lo + u * (hi - lo)


def interior(box, fraction: float = 1e-9) -> np.ndarray:
    """Shrink a box slightly so that open-interval boxes are sampled strictly inside."""
    box = np.asarray(box, dtype=float)
    w = box[:, 1] - box[:, 0]
    return np.column_stack([box[:, 0] + fraction * w, box[:, 1] - fraction * w])
