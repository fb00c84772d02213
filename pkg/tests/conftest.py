import numpy as np
import pytest
from jax import random

import dxhoglib  # noqa: F401  enables 64-bit jax before any array is built


@pytest.fixture
def key():
    return random.key(1234)


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)
