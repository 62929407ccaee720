import numpy as np
import pytest

from udnkit import precision


@pytest.fixture(autouse=True)
def _default_precision():
    """Every test starts from the 32-bit default."""
    precision.set_precision("f32")
    yield
    precision.set_precision("f32")


@pytest.fixture
def f64():
    with precision.precision("f64"):
        yield


def rng(seed=0):
    return np.random.default_rng(seed)
