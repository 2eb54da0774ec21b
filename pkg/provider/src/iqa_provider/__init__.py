"""iqa_provider: external metric provider speaking the benchmark protocol."""

from .backends import BACKENDS, MetricBackend, manifest
from .clipiqa import (PromptPairScore, clipiqa_metric, embedding_similarities,
                      image_embedding, image_similarities, positive_probability,
                      prompt_embeddings, quality_loss, text_embedding)
from .full_reference import DimensionMismatch, dists_metric, lpips_metric
from .no_reference import maniqa_metric, musiq_metric

__version__ = "0.1.0"
