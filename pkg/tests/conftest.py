import numpy as np
import pytest

from foodid.images import Image


def make_random_image(width, height, seed=0, lo=0, hi=256):
    """Uniform-random RGB image with values in [lo, hi)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    px = rng.integers(lo, hi, size=(height, width, 3), dtype=np.int64)
    return Image(px.astype(np.uint8))


def make_smooth_image(width, height, seed=0):
    """Low-frequency random image, a stand-in for a natural photo."""
    rng = np.random.Generator(np.random.PCG64(seed))
    coarse = rng.uniform(40, 215, size=(max(2, height // 8), max(2, width // 8), 3))
    ys = np.linspace(0, coarse.shape[0] - 1, height)
    xs = np.linspace(0, coarse.shape[1] - 1, width)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, coarse.shape[0] - 1)
    x1 = np.minimum(x0 + 1, coarse.shape[1] - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = coarse[y0][:, x0] * (1 - fx) + coarse[y0][:, x1] * fx
    bot = coarse[y1][:, x0] * (1 - fx) + coarse[y1][:, x1] * fx
    px = top * (1 - fy) + bot * fy
    return Image(np.clip(np.floor(px + 0.5), 0, 255).astype(np.uint8))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))
