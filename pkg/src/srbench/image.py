"""Raster data model, PNG I/O, luma conversion and bicubic resampling.

Images are kept as float64 arrays with samples in [0, 1]. The resampler
follows the MATLAB imresize convention (cubic kernel a = -0.5, half-pixel
coordinate mapping, edge replication, antialiased when shrinking), which is
the de-facto meaning of "bicubic" in SR evaluation.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass

import cv2
import numpy as np


class UnsupportedPngError(Exception):
    """PNG exists but its color type / bit depth is outside the supported set."""


class CorruptPngError(Exception):
    """File is not a decodable PNG stream."""


@dataclass(frozen=True)
class ImageBuffer:
    """Raster image, float64 samples in [0, 1], shape (h, w, c) with c in (1, 3)."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, 1|3) array, got shape {d.shape}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"empty image: shape {d.shape}")
        if d.dtype != np.float64:
            raise ValueError(f"expected float64 samples, got {d.dtype}")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("samples outside [0, 1]")
        d.setflags(write=False)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def samples(self) -> np.ndarray:
        """Flat row-major, channel-interleaved view."""
        return self.data.reshape(-1)


@dataclass(frozen=True)
class LumaPlane:
    """Single luma plane, float64 samples in [0, 1], shape (h, w)."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"expected nonempty (h, w) array, got shape {d.shape}")
        if d.dtype != np.float64:
            raise ValueError(f"expected float64 samples, got {d.dtype}")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("samples outside [0, 1]")
        d.setflags(write=False)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def samples(self) -> np.ndarray:
        return self.data.reshape(-1)


@dataclass(frozen=True)
class ResizeSpec:
    """Resampling parameters. scale is output/input size ratio."""

    scale: float
    kernel_sharpness: float = -0.5
    antialias: bool = True

    def __post_init__(self):
        if not (self.scale > 0):
            raise ValueError(f"scale must be positive, got {self.scale}")

    @classmethod
    def default(cls, scale: float) -> "ResizeSpec":
        """Antialias exactly when shrinking, as the evaluation protocol expects."""
        return cls(scale=scale, antialias=scale < 1.0)


_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# IHDR color types: 0 gray, 2 RGB, 3 palette, 4 gray+alpha, 6 RGBA
_GRAY_COLOR_TYPES = (0, 4)
_RGB_COLOR_TYPES = (2, 6)


def _read_png_header(path: str) -> tuple[int, int]:
    """Return (bit_depth, color_type) from the IHDR chunk."""
    with open(path, "rb") as fh:
        head = fh.read(33)
    if len(head) < 33 or head[:8] != _PNG_SIGNATURE:
        raise CorruptPngError(f"{path}: not a PNG stream")
    length, ctype = struct.unpack(">I4s", head[8:16])
    if ctype != b"IHDR" or length != 13:
        raise CorruptPngError(f"{path}: malformed IHDR chunk")
    bit_depth = head[24]
    color_type = head[25]
    return bit_depth, color_type


def load_png(path: str | os.PathLike) -> ImageBuffer:
    """Load an 8- or 16-bit gray/RGB PNG, stripping alpha, normalized to [0, 1]."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such image file: {path}")
    bit_depth, color_type = _read_png_header(path)
    if color_type not in _GRAY_COLOR_TYPES + _RGB_COLOR_TYPES:
        raise UnsupportedPngError(f"{path}: unsupported PNG color type {color_type}")
    if bit_depth not in (8, 16):
        raise UnsupportedPngError(f"{path}: unsupported PNG bit depth {bit_depth}")
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise CorruptPngError(f"{path}: PNG stream failed to decode")
    peak = float(2**bit_depth - 1)
    if color_type in _GRAY_COLOR_TYPES:
        gray = raw if raw.ndim == 2 else raw[:, :, 0]
        data = gray.astype(np.float64)[:, :, np.newaxis] / peak
    else:
        if raw.ndim != 3 or raw.shape[2] < 3:
            raise CorruptPngError(f"{path}: decoder returned unexpected layout")
        # OpenCV decodes as BGR(A); drop alpha and flip to RGB
        data = raw[:, :, 2::-1].astype(np.float64) / peak
    return ImageBuffer(data)


def save_png(buffer: ImageBuffer, path: str | os.PathLike, bitdepth: int = 8) -> None:
    """Write an 8-bit PNG. Quantization rounds half away from zero, then clamps."""
    if bitdepth != 8:
        raise ValueError(f"only 8-bit output is supported, got {bitdepth}")
    path = os.fspath(path)
    codes = np.clip(np.floor(buffer.data * 255.0 + 0.5), 0, 255).astype(np.uint8)
    if buffer.channels == 1:
        out = codes[:, :, 0]
    else:
        out = codes[:, :, ::-1]  # RGB -> BGR for the encoder
    try:
        ok = cv2.imwrite(path, out)
    except cv2.error as exc:
        raise OSError(f"cannot write PNG to {path}: {exc}") from exc
    if not ok:
        raise OSError(f"cannot write PNG to {path}")


# BT.601 studio-swing: Y in [16, 235] on the 8-bit scale for inputs in [0, 1]
_LUMA_WEIGHTS = (65.481, 128.553, 24.966)
_LUMA_OFFSET = 16.0


def rgb_to_luma(buffer: ImageBuffer) -> LumaPlane:
    """BT.601 studio-swing luma of a 3-channel buffer, clamped to [0, 1]."""
    if buffer.channels != 3:
        raise ValueError("rgb_to_luma requires a 3-channel buffer; single-channel "
                         "images are already luma (use to_luma)")
    r, g, b = buffer.data[:, :, 0], buffer.data[:, :, 1], buffer.data[:, :, 2]
    y = (_LUMA_OFFSET + _LUMA_WEIGHTS[0] * r + _LUMA_WEIGHTS[1] * g + _LUMA_WEIGHTS[2] * b) / 255.0
    return LumaPlane(np.clip(y, 0.0, 1.0))


def to_luma(buffer: ImageBuffer) -> LumaPlane:
    """Luma of any supported buffer: BT.601 for RGB, identity for grayscale."""
    if buffer.channels == 1:
        return LumaPlane(buffer.data[:, :, 0].copy())
    return rgb_to_luma(buffer)


def shave_border(plane: LumaPlane, margin: int) -> LumaPlane:
    """Interior crop excluding a margin-pixel frame on every side."""
    if margin < 0:
        raise ValueError(f"margin must be nonnegative, got {margin}")
    if margin == 0:
        return plane
    if plane.width <= 2 * margin or plane.height <= 2 * margin:
        raise ValueError(
            f"margin {margin} too large for {plane.width}x{plane.height} plane")
    return LumaPlane(plane.data[margin:-margin, margin:-margin].copy())


def _cubic_kernel(x: np.ndarray, a: float) -> np.ndarray:
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    inner = (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0
    outer = a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a
    return np.where(ax <= 1.0, inner, np.where(ax < 2.0, outer, 0.0))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _resample_operator(in_len: int, out_len: int, scale: float,
                       a: float, antialias: bool) -> np.ndarray:
    """Dense (out_len, in_len) row-stochastic operator for one axis.

    Half-pixel centers: source coordinate of output i is (i + 0.5)/scale - 0.5.
    When shrinking with antialias the kernel is dilated by 1/scale. Out-of-range
    taps are folded onto the edge samples (replication).
    """
    u = (np.arange(out_len, dtype=np.float64) + 0.5) / scale - 0.5
    if antialias and scale < 1.0:
        kernel_width = 4.0 / scale
        weight_of = lambda t: _cubic_kernel(t * scale, a)
    else:
        kernel_width = 4.0
        weight_of = lambda t: _cubic_kernel(t, a)
    taps = int(math.ceil(kernel_width)) + 2
    left = np.floor(u - kernel_width / 2.0).astype(np.int64)
    idx = left[:, np.newaxis] + np.arange(taps)[np.newaxis, :]
    w = weight_of(u[:, np.newaxis] - idx)
    w /= w.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, in_len - 1)
    op = np.zeros((out_len, in_len))
    np.add.at(op, (np.repeat(np.arange(out_len), taps), idx.reshape(-1)), w.reshape(-1))
    return op


def bicubic_resize(buffer: ImageBuffer, spec: ResizeSpec) -> ImageBuffer:
    """Separable cubic-convolution resampling; output clamped to [0, 1]."""
    out_h = _round_half_up(buffer.height * spec.scale)
    out_w = _round_half_up(buffer.width * spec.scale)
    if out_h < 1 or out_w < 1:
        raise ValueError(
            f"scale {spec.scale} collapses {buffer.width}x{buffer.height} to zero size")
    rows = _resample_operator(buffer.height, out_h, spec.scale,
                              spec.kernel_sharpness, spec.antialias)
    cols = _resample_operator(buffer.width, out_w, spec.scale,
                              spec.kernel_sharpness, spec.antialias)
    out = np.tensordot(rows, buffer.data, axes=(1, 0))
    out = np.tensordot(cols, out, axes=(1, 1)).transpose(1, 0, 2)
    return ImageBuffer(np.clip(out, 0.0, 1.0))


def center_crop_to_multiple(buffer: ImageBuffer, factor: int) -> ImageBuffer:
    """Center-crop so both dimensions are multiples of factor."""
    h, w = buffer.height, buffer.width
    new_h, new_w = h - h % factor, w - w % factor
    if new_h < factor or new_w < factor:
        raise ValueError(f"{w}x{h} image too small to crop to a multiple of {factor}")
    if (new_h, new_w) == (h, w):
        return buffer
    top = (h - new_h) // 2
    left = (w - new_w) // 2
    return ImageBuffer(buffer.data[top:top + new_h, left:left + new_w].copy())


def generate_lr(hr: ImageBuffer, factor: int = 4) -> ImageBuffer:
    """Degradation operator: center-crop to a multiple of factor, then
    antialiased bicubic downscale by 1/factor."""
    if factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor}")
    cropped = center_crop_to_multiple(hr, factor)
    return bicubic_resize(cropped, ResizeSpec.default(1.0 / factor))
