import numpy as np
import pytest

from hairtransfer import toy
from hairtransfer.features import ToyExtractor
from hairtransfer.generator import ToyGenerator


@pytest.fixture(scope="session")
def gen():
    return ToyGenerator(0)


@pytest.fixture(scope="session")
def ext():
    return ToyExtractor(0)


@pytest.fixture(scope="session")
def toy_tuple(gen):
    return toy.make_toy_tuple(gen, 0)


@pytest.fixture(scope="session")
def problem(toy_tuple):
    return toy.toy_problem(toy_tuple)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
