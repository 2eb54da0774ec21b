"""Image loading and the shared preprocessing recipe.

All backends see RGB float64 arrays in [0, 1]. Large inputs are bilinearly
capped at 768 px on the long side so scoring cost stays bounded; both images
of a full-reference pair go through the identical recipe.
"""

from __future__ import annotations

import numpy as np
from PIL import Image, UnidentifiedImageError

MAX_SIDE = 768


class ImageLoadError(Exception):
    pass


def load_rgb(path, max_side: int = MAX_SIDE) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            w, h = img.size
            long_side = max(w, h)
            if long_side > max_side:
                scale = max_side / long_side
                img = img.resize((max(1, round(w * scale)), max(1, round(h * scale))),
                                 Image.BILINEAR)
            data = np.asarray(img, dtype=np.float64) / 255.0
    except FileNotFoundError as exc:
        raise ImageLoadError(f"no such image: {path}") from exc
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ImageLoadError(f"cannot decode image {path}: {exc}") from exc
    if data.ndim != 3 or data.shape[2] != 3:
        raise ImageLoadError(f"unexpected layout for {path}: {data.shape}")
    return data


def luminance(rgb: np.ndarray) -> np.ndarray:
    return 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
