"""Antonym-prompt quality scoring.

The pipeline mirrors the dual-encoder formulation: unit-normalized text
embeddings for a positive/negative prompt pair, a unit-normalized image
embedding, cosine similarities against both prompts, the quality loss
1 - s_pos + s_neg, and a softmax over the two similarities at logit scale
100 whose positive-class probability is the metric value.

The shipped encoders are deterministic and self-contained: the text encoder
hashes tokens into a 64-d space with a polarity lexicon driving the quality
axis, and the image encoder places the naturalness score on that axis with
content statistics filling the remaining dimensions.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass

import numpy as np

from .features import naturalness_score, quality_features
from .images import load_rgb

EMBED_DIM = 64
LOGIT_SCALE = 100.0

_POLARITY = {
    "good": 1.0, "great": 1.0, "sharp": 1.0, "clean": 1.0, "clear": 1.0,
    "pristine": 1.0, "beautiful": 1.0, "high": 0.5, "natural": 0.5,
    "bad": -1.0, "poor": -1.0, "blurry": -1.0, "noisy": -1.0, "ugly": -1.0,
    "distorted": -1.0, "low": -0.5, "artifacted": -1.0,
}
_POLARITY_WEIGHT = 0.75
_IMAGE_AXIS_WEIGHT = 0.5
_IMAGE_CONTENT_WEIGHT = 0.35

_PROJECTION_SEED = 40897


def _token_direction(token: str) -> np.ndarray:
    """Stable unit direction in the non-axis subspace, derived from the token."""
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.standard_normal(EMBED_DIM)
    v[0] = 0.0
    return v / np.linalg.norm(v)


def text_embedding(text: str) -> np.ndarray:
    tokens = re.findall(r"[a-z0-9]+", text.lower())
    if not tokens:
        raise ValueError(f"prompt {text!r} has no tokens")
    v = np.zeros(EMBED_DIM)
    for token in tokens:
        v += _token_direction(token)
        v[0] += _POLARITY_WEIGHT * _POLARITY.get(token, 0.0)
    return v / np.linalg.norm(v)


def prompt_embeddings(pos_text: str = "Good photo",
                      neg_text: str = "Bad photo") -> tuple[np.ndarray, np.ndarray]:
    """Unit embeddings for the antonym prompt pair."""
    return text_embedding(pos_text), text_embedding(neg_text)


def _content_projection() -> np.ndarray:
    rng = np.random.default_rng(_PROJECTION_SEED)
    p = rng.standard_normal((EMBED_DIM - 1, 6))
    return p / np.linalg.norm(p, axis=0, keepdims=True)


_CONTENT_PROJECTION = _content_projection()
# rough centering/spread of the six statistics over natural content
_FEATURE_CENTER = np.array([0.6, 0.02, 0.05, 0.19, 0.05, -1.45])
_FEATURE_SPREAD = np.array([0.5, 0.03, 0.3, 0.10, 0.10, 0.5])


def image_embedding(rgb: np.ndarray) -> np.ndarray:
    """Unit embedding whose quality-axis coordinate tracks naturalness."""
    v = np.zeros(EMBED_DIM)
    v[0] = _IMAGE_AXIS_WEIGHT * math.tanh(naturalness_score(rgb) / 2.5)
    z = (quality_features(rgb) - _FEATURE_CENTER) / _FEATURE_SPREAD
    content = _CONTENT_PROJECTION @ np.tanh(z / 3.0)
    norm = np.linalg.norm(content)
    if norm > 0:
        v[1:] = _IMAGE_CONTENT_WEIGHT * content / norm
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class PromptPairScore:
    s_pos: float
    s_neg: float


def image_similarities(image_path, t_pos: np.ndarray,
                       t_neg: np.ndarray) -> PromptPairScore:
    return embedding_similarities(image_embedding(load_rgb(image_path)),
                                  t_pos, t_neg)


def embedding_similarities(embedding: np.ndarray, t_pos: np.ndarray,
                           t_neg: np.ndarray) -> PromptPairScore:
    return PromptPairScore(s_pos=float(embedding @ t_pos),
                           s_neg=float(embedding @ t_neg))


def quality_loss(score: PromptPairScore) -> float:
    """1 - s_pos + s_neg; 0 at perfect alignment, 3 at the adversarial corner."""
    return 1.0 - score.s_pos + score.s_neg


def positive_probability(score: PromptPairScore,
                         logit_scale: float = LOGIT_SCALE) -> float:
    """Softmax over the two similarities; the metric value."""
    return 1.0 / (1.0 + math.exp(-logit_scale * (score.s_pos - score.s_neg)))


_DEFAULT_PROMPTS = prompt_embeddings()


def clipiqa_metric(image_path) -> float:
    t_pos, t_neg = _DEFAULT_PROMPTS
    return positive_probability(image_similarities(image_path, t_pos, t_neg))


def encoder_digest() -> str:
    digest = hashlib.sha256()
    digest.update(_CONTENT_PROJECTION.tobytes())
    digest.update(_DEFAULT_PROMPTS[0].tobytes())
    digest.update(_DEFAULT_PROMPTS[1].tobytes())
    return digest.hexdigest()
