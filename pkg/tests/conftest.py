import numpy as np
import pytest

from devia.mf_model import birth_death_model, two_state_model


@pytest.fixture(scope="session")
def default_model():
    # documented test model: 5-state mean-field birth-death chain
    return birth_death_model(K=5, a=0.5, b=0.5, c=0.5)


@pytest.fixture(scope="session")
def flip_model():
    return two_state_model(1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(987654321)
