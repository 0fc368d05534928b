import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tasnet.model import ModelConfig, init_params

# Property tests are seeded (derandomized) and run at least 200 cases each.
settings.register_profile(
    "tasnet",
    max_examples=200,
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("tasnet")

TOY = ModelConfig(L=8, N=16, C=2, num_layers=4, hidden_size=12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_config():
    return TOY


@pytest.fixture
def toy_params():
    return init_params(TOY, seed=3, dtype=np.float64)
