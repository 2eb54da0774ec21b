import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from util import save, texture


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("images")


@pytest.fixture(scope="session")
def clean_images(fixture_dir):
    rng = np.random.default_rng(501)
    paths = []
    for k in range(10):
        path = fixture_dir / f"clean_{k}.png"
        save(texture(192, 192, rng), path)
        paths.append(path)
    return paths
