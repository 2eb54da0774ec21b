import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for `oracles` and `helpers`

from srbench.image import ImageBuffer
from srbench.synth import natural_texture


@pytest.fixture(scope="session")
def texture_bank() -> list[ImageBuffer]:
    """Ten deterministic naturalistic textures shared by the slow tests."""
    rng = np.random.default_rng(4242)
    return [natural_texture(224, 224, rng) for _ in range(10)]
