"""No-reference quality predictions in the documented output ranges.

`musiq` pools the naturalness score over multiple scales into [0, 100];
`maniqa` pools per-patch scores weighted by local saliency (variance) into
[0, 1]. Both are monotone in the shared naturalness statistics, so clean
content outranks its blurred, noisy or blocky versions.
"""

from __future__ import annotations

import math

import numpy as np

from .features import naturalness_score
from .images import load_rgb


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def _multiscale_score(rgb: np.ndarray) -> float:
    full = naturalness_score(rgb)
    half = rgb[: rgb.shape[0] & ~1, : rgb.shape[1] & ~1]
    half = half.reshape(half.shape[0] // 2, 2, half.shape[1] // 2, 2, 3).mean(axis=(1, 3))
    if min(half.shape[:2]) < 32:
        return full
    # native resolution dominates: downsampling hides additive noise
    return 0.7 * full + 0.3 * naturalness_score(half)


def musiq_metric(image_path) -> float:
    rgb = load_rgb(image_path)
    return 100.0 * _sigmoid(0.9 * _multiscale_score(rgb) + 0.3)


def _patch_grid(rgb: np.ndarray, grid: int = 3):
    h, w = rgb.shape[:2]
    hs, ws = h // grid, w // grid
    for i in range(grid):
        for j in range(grid):
            yield rgb[i * hs:(i + 1) * hs, j * ws:(j + 1) * ws]


def maniqa_metric(image_path) -> float:
    rgb = load_rgb(image_path)
    if min(rgb.shape[:2]) < 96:
        return _sigmoid(0.8 * naturalness_score(rgb))
    scores, weights = [], []
    for patch in _patch_grid(rgb):
        scores.append(naturalness_score(patch))
        weights.append(patch.var() + 1e-6)
    pooled = float(np.average(scores, weights=weights))
    return _sigmoid(0.8 * pooled)
