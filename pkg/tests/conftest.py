import numpy as np
import pytest

from xmodal.text_encoding import EncodingSpec, WordEmbeddingTable


@pytest.fixture
def unit_spec():
    """1x superpixels on a small canvas; quantization range [-1, 1]."""
    return EncodingSpec(
        canvas_width=8, canvas_height=8, superpixel_scale=1, value_min=-1.0, value_max=1.0
    )


@pytest.fixture
def tiny_table():
    """Three d=3 words with hand-picked component values."""
    vectors = np.array(
        [
            [-1.0, 0.0, 1.0],
            [0.5, -0.5, 0.25],
            [1.0, 1.0, -1.0],
        ]
    )
    return WordEmbeddingTable(vocab={"alpha": 0, "beta": 1, "gamma": 2}, vectors=vectors)


def random_raster(rng, h=8, w=8):
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
