"""Synthetic naturalistic textures.

Natural photographs have roughly 1/f amplitude spectra; filtered-noise
textures with that falloff reproduce the local-statistics behavior the
no-reference metric relies on. Used to build the shipped pristine model and
as deterministic fixtures where real photographs are unavailable.
"""

from __future__ import annotations

import numpy as np

from .image import ImageBuffer


def _pink_field(height: int, width: int, slope: float, rng: np.random.Generator) -> np.ndarray:
    fy = np.fft.fftfreq(height)[:, np.newaxis]
    fx = np.fft.fftfreq(width)[np.newaxis, :]
    radius = np.sqrt(fy * fy + fx * fx)
    radius[0, 0] = 1.0  # DC handled separately
    spectrum = (rng.standard_normal((height, width))
                + 1j * rng.standard_normal((height, width))) / radius**slope
    spectrum[0, 0] = 0.0
    field = np.fft.ifft2(spectrum).real
    return field / (np.std(field) + 1e-12)


def natural_texture(width: int, height: int, rng: np.random.Generator) -> ImageBuffer:
    """One RGB texture with a natural-like spectrum and mild chroma variation."""
    slope = rng.uniform(0.9, 1.5)
    luma = _pink_field(height, width, slope, rng)
    lo, hi = np.percentile(luma, [1.0, 99.0])
    luma = np.clip((luma - lo) / (hi - lo + 1e-12), 0.0, 1.0)
    luma = 0.08 + 0.84 * luma
    chroma_strength = rng.uniform(0.02, 0.08)
    data = np.empty((height, width, 3))
    for c in range(3):
        tint = _pink_field(height, width, slope + 0.5, rng) * chroma_strength
        data[:, :, c] = luma + tint
    return ImageBuffer(np.clip(data, 0.0, 1.0))


def add_gaussian_noise(buffer: ImageBuffer, sigma: float,
                       rng: np.random.Generator) -> ImageBuffer:
    """Additive Gaussian noise with standard deviation sigma on the [0,1] scale."""
    noisy = buffer.data + rng.standard_normal(buffer.data.shape) * sigma
    return ImageBuffer(np.clip(noisy, 0.0, 1.0))
