"""Fixture images for provider tests: naturalistic textures and the
degradations the ordering checks compare against."""

import numpy as np
from PIL import Image


def texture(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    slope = rng.uniform(1.3, 1.6)
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    radius = np.hypot(fy, fx)
    radius[0, 0] = 1.0
    spectrum = (rng.standard_normal((height, width))
                + 1j * rng.standard_normal((height, width))) / radius**slope
    spectrum[0, 0] = 0.0
    field = np.fft.ifft2(spectrum).real
    lo, hi = np.percentile(field, [1, 99])
    field = np.clip((field - lo) / (hi - lo + 1e-9), 0, 1) * 0.85 + 0.07
    tint = rng.uniform(-0.05, 0.05, 3)
    return np.clip(np.stack([field + t for t in tint], axis=-1), 0.0, 1.0)


def save(arr: np.ndarray, path) -> None:
    Image.fromarray((np.clip(arr, 0, 1) * 255 + 0.5).astype(np.uint8)).save(path)


def upscale_blur(arr: np.ndarray, factor: int = 4) -> np.ndarray:
    h, w = arr.shape[:2]
    img = Image.fromarray((arr * 255 + 0.5).astype(np.uint8))
    small = img.resize((w // factor, h // factor), Image.BICUBIC)
    return np.asarray(small.resize((w, h), Image.BICUBIC), dtype=np.float64) / 255


def add_noise(arr: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    return np.clip(arr + rng.standard_normal(arr.shape) * sigma, 0.0, 1.0)


def blockify(arr: np.ndarray, block: int = 8) -> np.ndarray:
    out = arr.copy()
    h, w = arr.shape[:2]
    for i in range(0, h - block + 1, block):
        for j in range(0, w - block + 1, block):
            out[i:i + block, j:j + block] = \
                arr[i:i + block, j:j + block].mean(axis=(0, 1))
    return out
