import numpy as np
import pytest

from bpsd.framework import FrameworkConfig
from bpsd.learners import ForestParams
from bpsd.pipeline import prepare, train_all
from bpsd.synthgen import GeneratorConfig, generate_cohort
from bpsd.tcn import TcnConfig

SMALL_GEN = GeneratorConfig(n_patients=6, days=14, seed=5)
FAST = FrameworkConfig(tune=False, forest=ForestParams(n_trees=15), tcn=TcnConfig(epochs=3, hidden_channels=16, latent_dim=32))


@pytest.fixture(scope="session")
def small_cohort():
    return generate_cohort(SMALL_GEN)


@pytest.fixture(scope="session")
def small_data(small_cohort):
    return prepare(small_cohort, SMALL_GEN.seed)


@pytest.fixture(scope="session")
def small_models(small_data):
    return train_all(small_data, FAST)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
