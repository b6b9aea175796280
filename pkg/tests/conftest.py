import numpy as np
import pytest

from gemi.datasets import make_planted_panels
from gemi.numerics import SeededRng


@pytest.fixture
def rng():
    return SeededRng(20240817)


@pytest.fixture(scope="session")
def planted():
    return make_planted_panels(seed=11)


def random_features(rng, n, d):
    return rng.normal(size=(n, d))
