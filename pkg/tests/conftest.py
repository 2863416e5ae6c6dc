import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from bandfuse.datasets import HsiDataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(pixels, labels) -> HsiDataset:
    pixels = np.asarray(pixels, dtype=np.float64)
    return HsiDataset(
        pixels=pixels,
        labels=np.asarray(labels, dtype=np.int64),
        band_ids=np.arange(1, pixels.shape[1] + 1),
    )


@pytest.fixture
def tiny_dataset():
    return make_dataset(
        [[0.0, 1.0, 2.0], [1.0, 2.0, 3.0], [4.0, 0.0, 1.0], [5.0, 1.0, 0.0]],
        [1, 1, 2, 2],
    )
