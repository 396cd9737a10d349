import numpy as np
import pytest

from tests.problems import make_problem


@pytest.fixture
def small_model():
    return make_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
