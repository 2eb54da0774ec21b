"""Backend registry: metric name -> implementation, pinned by content hash.

Published pretrained checkpoints are not bundled; each shipped backend is a
deterministic self-contained estimator whose derived weight tables are
hashed into the manifest, so results remain attributable and reproducible.
The manifest is exposed both as a data file and over `--manifest`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

from .clipiqa import clipiqa_metric, encoder_digest
from .full_reference import dists_metric, lpips_metric
from .features import pyramid_weights_digest

FULL_REFERENCE = frozenset({"lpips", "dists"})
NO_REFERENCE = frozenset({"maniqa", "musiq", "clipiqa"})


@dataclass(frozen=True)
class MetricBackend:
    name: str
    model_id: str
    preprocessing: str
    compute: Callable
    full_reference: bool

    def checkpoint_hash(self) -> str:
        if self.name in ("lpips", "dists"):
            return pyramid_weights_digest()
        if self.name == "clipiqa":
            return encoder_digest()
        return "statistics-only"


def _registry() -> dict[str, MetricBackend]:
    from .no_reference import maniqa_metric, musiq_metric

    preprocessing = "RGB float, long side capped at 768 px (bilinear)"
    return {
        "lpips": MetricBackend("lpips", "seeded-pyramid-v1", preprocessing,
                               lpips_metric, True),
        "dists": MetricBackend("dists", "seeded-pyramid-stats-v1", preprocessing,
                               dists_metric, True),
        "maniqa": MetricBackend("maniqa", "saliency-pooled-naturalness-v1",
                                preprocessing, maniqa_metric, False),
        "musiq": MetricBackend("musiq", "multiscale-naturalness-v1",
                               preprocessing, musiq_metric, False),
        "clipiqa": MetricBackend("clipiqa", "prompt-pair-naturalness-v1",
                                 preprocessing, clipiqa_metric, False),
    }


BACKENDS = _registry()


def manifest() -> dict:
    return {
        "format": "iqa-provider-manifest",
        "version": 1,
        "metrics": {
            name: {
                "model": b.model_id,
                "checkpoint_sha256": b.checkpoint_hash(),
                "preprocessing": b.preprocessing,
            }
            for name, b in sorted(BACKENDS.items())
        },
    }


def manifest_json() -> str:
    return json.dumps(manifest(), indent=2, sort_keys=True) + "\n"
