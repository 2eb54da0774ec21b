"""Full-reference fidelity metrics: PSNR and SSIM on luma planes.

Both operate on planes that the evaluation protocol has already prepared
(border-shaved, quantized back to 8-bit codes); `quantize` performs that
quantization step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .image import LumaPlane


@dataclass(frozen=True)
class SSIMConfig:
    k1: float = 0.01
    k2: float = 0.03
    window_size: int = 11
    window_sigma: float = 1.5
    dynamic_range: float = 255.0

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1 and k2 must be positive")
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValueError(f"window_size must be odd and >= 3, got {self.window_size}")
        if self.window_sigma <= 0 or self.dynamic_range <= 0:
            raise ValueError("window_sigma and dynamic_range must be positive")


def quantize(plane: LumaPlane, levels: int = 255) -> LumaPlane:
    """Snap samples to integer codes /levels, rounding half away from zero."""
    codes = np.clip(np.floor(plane.data * levels + 0.5), 0, levels)
    return LumaPlane(codes / levels)


def _check_dims(ref: LumaPlane, test: LumaPlane) -> None:
    if (ref.height, ref.width) != (test.height, test.width):
        raise ValueError(f"dimension mismatch: {ref.width}x{ref.height} vs "
                         f"{test.width}x{test.height}")


def psnr(ref: LumaPlane, test: LumaPlane, peak: float = 255.0) -> float:
    """10*log10(peak^2 / MSE) with planes rescaled to [0, peak]; +inf when equal."""
    _check_dims(ref, test)
    diff = (ref.data - test.data) * peak
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_taps(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _window_mean(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Gaussian-weighted local mean, valid region only (no padding influence)."""
    r = len(taps) // 2
    out = ndimage.correlate1d(x, taps, axis=0, mode="constant")
    out = ndimage.correlate1d(out, taps, axis=1, mode="constant")
    return out[r:-r, r:-r]


def ssim(ref: LumaPlane, test: LumaPlane, cfg: SSIMConfig = SSIMConfig()) -> float:
    """Mean structural similarity over the valid (unpadded) window positions."""
    _check_dims(ref, test)
    if ref.width < cfg.window_size or ref.height < cfg.window_size:
        raise ValueError(f"image {ref.width}x{ref.height} smaller than "
                         f"{cfg.window_size}-pixel SSIM window")
    L = cfg.dynamic_range
    x = ref.data * L
    y = test.data * L
    c1 = (cfg.k1 * L) ** 2
    c2 = (cfg.k2 * L) ** 2
    taps = _gaussian_taps(cfg.window_size, cfg.window_sigma)

    mu_x = _window_mean(x, taps)
    mu_y = _window_mean(y, taps)
    sigma_x = _window_mean(x * x, taps) - mu_x * mu_x
    sigma_y = _window_mean(y * y, taps) - mu_y * mu_y
    sigma_xy = _window_mean(x * y, taps) - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + c1) * (2.0 * sigma_xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sigma_x + sigma_y + c2)
    return float(np.mean(num / den))
