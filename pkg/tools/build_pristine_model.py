#!/usr/bin/env python3
"""Regenerate the shipped pristine model (src/srbench/data/pristine.niqm).

The corpus is 64 deterministic naturalistic textures (seeded pink noise);
refit on real pristine photographs with `srbench fit-niqe` when available.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from srbench.image import to_luma
from srbench.niqe import fit_pristine_model, save_model
from srbench.synth import natural_texture

OUT = Path(__file__).resolve().parents[1] / "src" / "srbench" / "data" / "pristine.niqm"
CORPUS_SEED = 20250301
CORPUS_SIZE = 64
TEXTURE_SIZE = 288


def main() -> None:
    rng = np.random.default_rng(CORPUS_SEED)
    corpus = [to_luma(natural_texture(TEXTURE_SIZE, TEXTURE_SIZE, rng))
              for _ in range(CORPUS_SIZE)]
    model = fit_pristine_model(corpus)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, OUT)
    print(f"wrote {OUT} ({OUT.stat().st_size} bytes) from {CORPUS_SIZE} textures")


if __name__ == "__main__":
    main()
