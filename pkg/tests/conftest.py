import numpy as np
import pytest

from mstaf import tensor as T


@pytest.fixture(autouse=True)
def _reset_default_dtype():
    yield
    T.set_default_dtype(np.float32)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
