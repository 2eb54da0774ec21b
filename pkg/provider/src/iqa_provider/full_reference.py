"""Full-reference distances over the fixed feature pyramid.

`lpips`: mean squared difference of channel-unit-normalized deep features,
averaged across pyramid stages. `dists`: mean/correlation statistics per
feature channel combined into a similarity, reported as 1 - similarity.
Both are exactly zero for identical inputs.
"""

from __future__ import annotations

import numpy as np

from .features import pyramid_features
from .images import load_rgb

_C1 = 1e-6
_C2 = 1e-6


class DimensionMismatch(Exception):
    pass


def _paired_features(sr_path, hr_path):
    sr = load_rgb(sr_path)
    hr = load_rgb(hr_path)
    if sr.shape != hr.shape:
        raise DimensionMismatch(
            f"image sizes differ: {sr.shape[1]}x{sr.shape[0]} vs "
            f"{hr.shape[1]}x{hr.shape[0]}")
    return pyramid_features(sr), pyramid_features(hr), sr, hr


def lpips_metric(sr_path, hr_path) -> float:
    feats_sr, feats_hr, _, _ = _paired_features(sr_path, hr_path)
    total = 0.0
    for fs, fh in zip(feats_sr, feats_hr):
        total += float(((fs - fh) ** 2).sum(axis=0).mean())
    return total / len(feats_sr)


def _stat_similarity(x: np.ndarray, y: np.ndarray) -> float:
    """Mean/structure similarity of one feature map pair, in [-1, 1]."""
    mx, my = x.mean(), y.mean()
    vx, vy = x.var(), y.var()
    cxy = ((x - mx) * (y - my)).mean()
    l_term = (2 * mx * my + _C1) / (mx * mx + my * my + _C1)
    s_term = (2 * cxy + _C2) / (vx + vy + _C2)
    return float((l_term + s_term) / 2.0)


def dists_metric(sr_path, hr_path) -> float:
    feats_sr, feats_hr, sr, hr = _paired_features(sr_path, hr_path)
    sims = []
    for c in range(3):  # stage 0: the raw image planes
        sims.append(_stat_similarity(sr[:, :, c], hr[:, :, c]))
    for fs, fh in zip(feats_sr, feats_hr):
        for c in range(fs.shape[0]):
            sims.append(_stat_similarity(fs[c], fh[c]))
    similarity = float(np.mean(sims))
    return float(np.clip(1.0 - similarity, 0.0, 1.0))
