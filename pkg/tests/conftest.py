import numpy as np
import pytest

from seqtest.models import BernoulliOneSided, GaussianMean


@pytest.fixture(scope="session")
def gauss():
    return GaussianMean(0.5)


@pytest.fixture(scope="session")
def bern():
    return BernoulliOneSided(0.3, 0.7)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
