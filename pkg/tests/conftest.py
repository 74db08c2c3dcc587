import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "curvlab",
    deadline=None,
    max_examples=30,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("curvlab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
