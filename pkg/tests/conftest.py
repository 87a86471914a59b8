import numpy as np
import pytest
from PIL import Image

from deepmatch.core import ImageBuffer


def multiscale_texture(size: int, seed: int, channels: int = 1) -> ImageBuffer:
    """Deterministic smooth multi-scale noise texture in [0, 1]."""
    rng = np.random.default_rng(seed)
    acc = np.zeros((size, size, channels), dtype=np.float64)
    for scale, weight in ((size // 16, 1.0), (size // 4, 0.5), (size, 0.25)):
        coarse = rng.uniform(0.0, 1.0, size=(scale, scale, channels))
        for c in range(channels):
            im = Image.fromarray((coarse[:, :, c] * 255).astype(np.uint8), "L")
            acc[:, :, c] += weight * (
                np.asarray(im.resize((size, size), Image.BILINEAR), dtype=np.float64)
                / 255.0
            )
    acc -= acc.min()
    acc /= acc.max()
    return ImageBuffer.from_array(acc.astype(np.float32))


@pytest.fixture(scope="session")
def texture_256() -> ImageBuffer:
    return multiscale_texture(256, seed=7)


@pytest.fixture(scope="session")
def texture_128() -> ImageBuffer:
    return multiscale_texture(128, seed=11)
