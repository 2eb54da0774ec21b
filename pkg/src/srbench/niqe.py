"""No-reference quality via natural-scene statistics.

An image is scored by the Mahalanobis-style displacement between the
statistics of its locally normalized (MSCN) coefficients and a model fitted
on a pristine corpus. Features are asymmetric-generalized-Gaussian fits of
the MSCN field and its four orientation pair products, per sharp patch, at
two scales (18 features per scale).

Constants follow the standard formulation: 7x7 Gaussian normalization window
with sigma 7/6, 96-pixel patches, 0.75 sharpness-selection threshold, shape
grid 0.2:0.001:10.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy import linalg, ndimage
from scipy.special import gamma as gamma_fn

from .image import LumaPlane

NORM_WINDOW_SIZE = 7
NORM_WINDOW_SIGMA = 7.0 / 6.0
FEATURES_PER_SCALE = 18
NUM_SCALES = 2
FEATURE_DIM = FEATURES_PER_SCALE * NUM_SCALES

_SHAPE_GRID = np.linspace(0.2, 10.0, 9801)
_SHAPE_RATIO = (gamma_fn(2.0 / _SHAPE_GRID) ** 2) / (
    gamma_fn(1.0 / _SHAPE_GRID) * gamma_fn(3.0 / _SHAPE_GRID))


class NoSharpPatchesError(ValueError):
    """Raised when the sharpness selection rejects every patch."""


@dataclass(frozen=True)
class AGGDParams:
    alpha: float
    sigma_left: float
    sigma_right: float
    mean_offset: float
    degenerate: bool = False


@dataclass(frozen=True)
class NIQEModel:
    mu: np.ndarray       # (36,)
    sigma: np.ndarray    # (36, 36)
    patch_size: int = 96
    sharpness_threshold: float = 0.75

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        sig = np.asarray(self.sigma, dtype=np.float64)
        if mu.shape != (FEATURE_DIM,):
            raise ValueError(f"mu must have shape ({FEATURE_DIM},), got {mu.shape}")
        if sig.shape != (FEATURE_DIM, FEATURE_DIM):
            raise ValueError(f"sigma must be {FEATURE_DIM}x{FEATURE_DIM}, got {sig.shape}")
        if not np.allclose(sig, sig.T, atol=1e-8):
            raise ValueError("sigma must be symmetric")
        floor = -1e-6 * max(1.0, float(np.abs(sig).max()))
        if np.linalg.eigvalsh(sig).min() < floor:
            raise ValueError("sigma must be positive semi-definite")
        if self.patch_size < 2 or self.patch_size % 2 != 0:
            raise ValueError(f"patch_size must be even and >= 2, got {self.patch_size}")
        if not (0.0 < self.sharpness_threshold <= 1.0):
            raise ValueError("sharpness_threshold must be in (0, 1]")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sig)
        mu.setflags(write=False)
        sig.setflags(write=False)

    @property
    def degenerate(self) -> bool:
        """True when the pristine covariance carries no variation at all."""
        return bool(np.all(self.sigma == 0.0))


def _gaussian_taps(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _smooth(img: np.ndarray) -> np.ndarray:
    taps = _gaussian_taps(NORM_WINDOW_SIZE, NORM_WINDOW_SIGMA)
    out = ndimage.correlate1d(img, taps, axis=0, mode="nearest")
    return ndimage.correlate1d(out, taps, axis=1, mode="nearest")


def _local_stats(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = _smooth(img)
    sigma = np.sqrt(np.abs(_smooth(img * img) - mu * mu))
    return mu, sigma


def mscn(plane: LumaPlane) -> np.ndarray:
    """Mean-subtracted contrast-normalized coefficients on the 0-255 scale."""
    if plane.width < NORM_WINDOW_SIZE or plane.height < NORM_WINDOW_SIZE:
        raise ValueError(f"plane {plane.width}x{plane.height} smaller than the "
                         f"{NORM_WINDOW_SIZE}x{NORM_WINDOW_SIZE} normalization window")
    img = plane.data * 255.0
    mu, sigma = _local_stats(img)
    return (img - mu) / (sigma + 1.0)


def aggd_fit(samples: np.ndarray) -> AGGDParams:
    """Moment-matching asymmetric generalized Gaussian fit over the shape grid.

    All-equal input cannot be fitted; it yields the grid-maximum shape flagged
    degenerate rather than an error, so feature extraction stays total.
    """
    vec = np.asarray(samples, dtype=np.float64).reshape(-1)
    if vec.size < 2:
        raise ValueError(f"need at least 2 samples, got {vec.size}")
    sq = vec * vec
    mean_sq = float(np.mean(sq))
    if mean_sq == 0.0:
        return AGGDParams(alpha=float(_SHAPE_GRID[-1]), sigma_left=0.0,
                          sigma_right=0.0, mean_offset=0.0, degenerate=True)
    # summing each side in sorted order keeps mirrored inputs exactly symmetric
    left = np.sort(sq[vec < 0])
    right = np.sort(sq[vec > 0])
    left_std = float(np.sqrt(np.mean(left))) if left.size else 0.0
    right_std = float(np.sqrt(np.mean(right))) if right.size else 0.0
    gamma_hat = left_std / right_std if right_std > 0 else np.inf
    r_hat = float(np.mean(np.abs(vec))) ** 2 / mean_sq
    r_norm = r_hat * (gamma_hat**3 + 1.0) * (gamma_hat + 1.0) / (gamma_hat**2 + 1.0) ** 2
    alpha = float(_SHAPE_GRID[np.argmin((_SHAPE_RATIO - r_norm) ** 2)])
    beta_scale = np.sqrt(gamma_fn(1.0 / alpha) / gamma_fn(3.0 / alpha))
    beta_left = left_std * beta_scale
    beta_right = right_std * beta_scale
    mean_offset = (beta_right - beta_left) * (gamma_fn(2.0 / alpha) / gamma_fn(1.0 / alpha))
    return AGGDParams(alpha=alpha, sigma_left=beta_left, sigma_right=beta_right,
                      mean_offset=mean_offset)


# circular-shift orientations: horizontal, vertical, two diagonals
_PAIR_SHIFTS = ((0, 1), (1, 0), (1, 1), (1, -1))


def _patch_features(coeffs: np.ndarray) -> np.ndarray:
    feats = np.empty(FEATURES_PER_SCALE)
    head = aggd_fit(coeffs)
    feats[0] = head.alpha
    feats[1] = (head.sigma_left + head.sigma_right) / 2.0
    for k, shift in enumerate(_PAIR_SHIFTS):
        pair = coeffs * np.roll(coeffs, shift, axis=(0, 1))
        p = aggd_fit(pair)
        feats[2 + 4 * k: 6 + 4 * k] = (p.alpha, p.mean_offset, p.sigma_left, p.sigma_right)
    return feats


def _decimate(img: np.ndarray) -> np.ndarray:
    """Gaussian low-pass, then 2:1 decimation aligned at half-pixel centers
    (2x2 mean), which keeps the pyramid symmetric under 180-degree rotation."""
    s = _smooth(img)
    h, w = s.shape[0] & ~1, s.shape[1] & ~1
    return s[:h, :w].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _image_features(plane: LumaPlane, patch_size: int,
                    sharpness_threshold: float) -> np.ndarray:
    """(n_selected_patches, 36) feature matrix for one image."""
    if plane.width < patch_size or plane.height < patch_size:
        raise ValueError(f"image {plane.width}x{plane.height} smaller than "
                         f"{patch_size}-pixel patches")
    rows = plane.height // patch_size
    cols = plane.width // patch_size
    img = plane.data[: rows * patch_size, : cols * patch_size] * 255.0

    mu, deviation = _local_stats(img)
    coeffs1 = (img - mu) / (deviation + 1.0)
    img2 = _decimate(img)
    mu2, dev2 = _local_stats(img2)
    coeffs2 = (img2 - mu2) / (dev2 + 1.0)

    sharpness = deviation.reshape(rows, patch_size, cols, patch_size).mean(axis=(1, 3))
    peak = float(sharpness.max())
    # flat images leave only cancellation noise (~1e-6 on the 0-255 scale)
    if peak <= 1e-3:
        raise NoSharpPatchesError(
            "no patches passed the sharpness selection (flat image); "
            "lower sharpness_threshold or supply a textured image")
    selected = np.argwhere(sharpness >= sharpness_threshold * peak)
    if selected.size == 0:
        raise NoSharpPatchesError(
            "no patches passed the sharpness selection; lower sharpness_threshold")

    half = patch_size // 2
    feats = np.empty((len(selected), FEATURE_DIM))
    for n, (i, j) in enumerate(selected):
        block1 = coeffs1[i * patch_size:(i + 1) * patch_size,
                         j * patch_size:(j + 1) * patch_size]
        block2 = coeffs2[i * half:(i + 1) * half, j * half:(j + 1) * half]
        feats[n, :FEATURES_PER_SCALE] = _patch_features(block1)
        feats[n, FEATURES_PER_SCALE:] = _patch_features(block2)
    return feats


def niqe_features(plane: LumaPlane, model: NIQEModel) -> np.ndarray:
    """Per-selected-patch feature rows (36 columns) under the model's settings."""
    return _image_features(plane, model.patch_size, model.sharpness_threshold)


def niqe(plane: LumaPlane, model: NIQEModel | None = None) -> float:
    """Distance of the image's fitted feature statistics from the pristine model."""
    if model is None:
        model = default_model()
    feats = niqe_features(plane, model)
    sample_mu = feats.mean(axis=0)
    sample_sigma = np.cov(feats.T) if feats.shape[0] > 1 else np.zeros((FEATURE_DIM, FEATURE_DIM))
    pooled = (model.sigma + sample_sigma) / 2.0
    displacement = model.mu - sample_mu
    try:
        solved = linalg.cho_solve(linalg.cho_factor(pooled), displacement)
    except linalg.LinAlgError:
        solved = np.linalg.pinv(pooled, rcond=1e-10) @ displacement
    return float(np.sqrt(max(displacement @ solved, 0.0)))


def fit_pristine_model(corpus: list[LumaPlane], patch_size: int = 96,
                       sharpness_threshold: float = 0.75,
                       min_corpus: int = 50) -> NIQEModel:
    """Fit pristine statistics by pooling selected-patch features across images."""
    if len(corpus) < min_corpus:
        raise ValueError(f"pristine corpus too small: {len(corpus)} < {min_corpus}")
    pooled = np.vstack([_image_features(p, patch_size, sharpness_threshold)
                        for p in corpus])
    mu = pooled.mean(axis=0)
    sigma = np.cov(pooled.T)
    if np.abs(sigma).max() < 1e-12:  # duplicated corpus: snap residual noise
        sigma = np.zeros_like(sigma)
    return NIQEModel(mu=mu, sigma=sigma, patch_size=patch_size,
                     sharpness_threshold=sharpness_threshold)


# Model container: 8-byte magic, version byte, then little-endian
# uint32 patch_size, float64 threshold, 36 float64 mu, 36*36 float64 sigma.
_MODEL_MAGIC = b"NIQEPRIS"
_MODEL_VERSION = 1


def save_model(model: NIQEModel, path) -> None:
    payload = struct.pack("<B I d", _MODEL_VERSION, model.patch_size,
                          model.sharpness_threshold)
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(payload)
        fh.write(model.mu.astype("<f8").tobytes())
        fh.write(model.sigma.astype("<f8").tobytes())


def load_model(path) -> NIQEModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:8] != _MODEL_MAGIC:
        raise ValueError(f"{path}: not a pristine-model file")
    version, patch_size, threshold = struct.unpack_from("<B I d", blob, 8)
    if version != _MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    offset = 8 + struct.calcsize("<B I d")
    need = offset + 8 * (FEATURE_DIM + FEATURE_DIM * FEATURE_DIM)
    if len(blob) != need:
        raise ValueError(f"{path}: truncated model file ({len(blob)} of {need} bytes)")
    mu = np.frombuffer(blob, dtype="<f8", count=FEATURE_DIM, offset=offset).copy()
    sigma = np.frombuffer(blob, dtype="<f8", count=FEATURE_DIM * FEATURE_DIM,
                          offset=offset + 8 * FEATURE_DIM).copy()
    return NIQEModel(mu=mu, sigma=sigma.reshape(FEATURE_DIM, FEATURE_DIM),
                     patch_size=patch_size, sharpness_threshold=threshold)


@lru_cache(maxsize=1)
def default_model() -> NIQEModel:
    """Model shipped with the package (fitted on synthetic naturalistic textures)."""
    ref = resources.files("srbench").joinpath("data/pristine.niqm")
    with resources.as_file(ref) as path:
        return load_model(path)
