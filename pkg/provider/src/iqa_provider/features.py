"""Deterministic image statistics shared by all scoring backends.

Two building blocks:

* scalar quality statistics (structure sharpness, noise level, grid
  blockiness, contrast, colorfulness, spectral slope) combined into a
  naturalness score that rises for clean, textured photographs and falls
  under blur, additive noise and block artifacts;
* a fixed-seed random convolutional pyramid whose channel-normalized
  responses back the full-reference distances.

Everything is derived from hard-coded seeds at import time; repeated calls
are bit-identical and the derived weight tables are content-hashed into the
backend manifest.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy import ndimage

from .images import luminance

_EPS = 1e-12


def _box(x: np.ndarray, size: int) -> np.ndarray:
    return ndimage.uniform_filter(x, size=size, mode="nearest")


def _half(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[0] & ~1, x.shape[1] & ~1
    return x[:h, :w].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def gradient_energy(gray: np.ndarray) -> float:
    gx = np.abs(np.diff(gray, axis=1)).mean()
    gy = np.abs(np.diff(gray, axis=0)).mean()
    return float(gx + gy) / 2.0


def noise_sigma(gray: np.ndarray) -> float:
    """Robust scale of the high-pass residual."""
    residual = gray - _box(gray, 3)
    return float(1.4826 * np.median(np.abs(residual)))


def residual_gaussianity(gray: np.ndarray) -> float:
    """1 when the high-pass residual looks Gaussian (additive noise), near 0
    when it is heavy-tailed (sparse edges and texture)."""
    r = (gray - _box(gray, 3)).ravel()
    s = r.std()
    if s < 1e-6:
        return 0.0
    z = (r - r.mean()) / s
    kurt = float(np.mean(z**4))  # 3 for Gaussian, much larger for sparse detail
    return float(1.0 / (1.0 + np.exp(2.0 * (kurt - 4.2))))


def noise_level(gray: np.ndarray) -> float:
    """Gaussianity-gated noise estimate: texture is not billed as noise."""
    return noise_sigma(gray) * residual_gaussianity(gray)


def sharpness_ratio(gray: np.ndarray) -> float:
    """Gradient energy in the top octave relative to the low band; bicubic
    upsampling blur pushes this toward zero."""
    low = _half(_half(gray))
    return gradient_energy(gray) / (gradient_energy(low) + 1e-6)


def blockiness_excess(gray: np.ndarray) -> float:
    """How much stronger discontinuities are on the 8-pixel grid."""
    def excess(d: np.ndarray) -> float:
        on = d[:, 7::8]
        mask = np.ones(d.shape[1], dtype=bool)
        mask[7::8] = False
        off = d[:, mask]
        if on.size == 0 or off.size == 0:
            return 0.0
        return float(on.mean() / (off.mean() + _EPS) - 1.0)

    dx = np.abs(np.diff(gray, axis=1))
    dy = np.abs(np.diff(gray, axis=0)).T
    return float(np.clip((excess(dx) + excess(dy)) / 2.0, 0.0, 4.0))


def contrast(gray: np.ndarray) -> float:
    return float(gray.std())


def colorfulness(rgb: np.ndarray) -> float:
    rg = rgb[:, :, 0] - rgb[:, :, 1]
    yb = 0.5 * (rgb[:, :, 0] + rgb[:, :, 1]) - rgb[:, :, 2]
    return float(np.hypot(rg.std(), yb.std()) + 0.3 * np.hypot(abs(rg.mean()), abs(yb.mean())))


def spectral_slope(gray: np.ndarray) -> float:
    """Log-log slope of the radially averaged amplitude spectrum (natural
    images sit near -1; blur steepens it, white noise flattens it)."""
    side = 128
    h, w = gray.shape
    if h < side or w < side:
        side = min(h, w) & ~1
        if side < 16:
            return -1.0
    top = (h - side) // 2
    left = (w - side) // 2
    crop = gray[top:top + side, left:left + side]
    crop = crop - crop.mean()
    amp = np.abs(np.fft.rfft2(crop))
    fy = np.fft.fftfreq(side)[:, None]
    fx = np.fft.rfftfreq(side)[None, :]
    radius = np.hypot(fy, fx)
    mask = (radius > 0.02) & (radius < 0.45)
    if not mask.any():
        return -1.0
    x = np.log(radius[mask])
    y = np.log(amp[mask] + _EPS)
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)


_FEATURE_NAMES = ("sharpness", "noise", "blockiness", "contrast",
                  "colorfulness", "slope")


def quality_features(rgb: np.ndarray) -> np.ndarray:
    gray = luminance(rgb)
    return np.array([
        sharpness_ratio(gray),
        noise_level(gray),
        blockiness_excess(gray),
        contrast(gray),
        colorfulness(rgb),
        spectral_slope(gray),
    ])


def naturalness_score(rgb: np.ndarray) -> float:
    """Scalar quality: positive for clean textured content, negative under
    blur, noise or blocking. Roughly in [-4, 4]."""
    sharp, noise, block, contr, _, slope = quality_features(rgb)
    score = (
        1.5 * np.log(sharp + 0.05)          # blur collapses the top octave
        - 40.0 * noise                      # gaussian-like residual energy
        - 2.0 * block                       # grid artifacts
        + 2.0 * min(contr, 0.30)            # washed-out content
        - 0.7 * abs(slope + 1.4)            # deviation from natural falloff
        + 1.9
    )
    return float(np.clip(score, -4.0, 4.0))


# ---------------------------------------------------------------------------
# fixed random convolutional pyramid (full-reference feature space)

_PYRAMID_SEED = 61001
_STAGE_CHANNELS = (3, 8, 12, 16)
_KERNEL = 3


def _make_stage(rng: np.random.Generator, in_ch: int, out_ch: int) -> np.ndarray:
    w = rng.standard_normal((out_ch, in_ch, _KERNEL, _KERNEL))
    w -= w.mean(axis=(2, 3), keepdims=True)  # ignore DC so diffs drive response
    norms = np.sqrt((w**2).sum(axis=(1, 2, 3), keepdims=True))
    return w / (norms + _EPS)


def _build_pyramid_weights() -> list[np.ndarray]:
    rng = np.random.default_rng(_PYRAMID_SEED)
    return [_make_stage(rng, _STAGE_CHANNELS[i], _STAGE_CHANNELS[i + 1])
            for i in range(len(_STAGE_CHANNELS) - 1)]


_PYRAMID = _build_pyramid_weights()


def pyramid_weights_digest() -> str:
    digest = hashlib.sha256()
    for stage in _PYRAMID:
        digest.update(stage.tobytes())
    return digest.hexdigest()


def _conv_stage(stack: np.ndarray, weights: np.ndarray) -> np.ndarray:
    out = np.empty((weights.shape[0], stack.shape[1], stack.shape[2]))
    for o in range(weights.shape[0]):
        acc = np.zeros(stack.shape[1:])
        for i in range(stack.shape[0]):
            acc += ndimage.convolve(stack[i], weights[o, i], mode="nearest")
        out[o] = np.abs(acc)
    return out


def _pool(stack: np.ndarray) -> np.ndarray:
    h, w = stack.shape[1] & ~1, stack.shape[2] & ~1
    return stack[:, :h, :w].reshape(stack.shape[0], h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def pyramid_features(rgb: np.ndarray) -> list[np.ndarray]:
    """Channel-unit-normalized feature maps, one per pyramid stage."""
    stack = np.moveaxis(rgb, 2, 0)
    maps = []
    for weights in _PYRAMID:
        stack = _conv_stage(stack, weights)
        norm = np.sqrt((stack**2).sum(axis=0, keepdims=True))
        maps.append(stack / (norm + 1e-10))
        stack = _pool(stack)
    return maps
