import numpy as np
import pytest

from mpqcc.types import SystemConfig


@pytest.fixture
def cfg():
    return SystemConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def x_cfg():
    """Decoy-only emission at 30 dB: nearly every paired triple is an X event."""
    return SystemConfig(p_mu=0.0, p_nu=1.0).with_total_loss(30.0)
