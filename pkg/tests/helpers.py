import numpy as np

from srbench.image import ImageBuffer


def random_buffer(rng: np.random.Generator, width: int, height: int,
                  channels: int = 3) -> ImageBuffer:
    return ImageBuffer(rng.random((height, width, channels)))
