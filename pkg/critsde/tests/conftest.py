import os

# no version check round trip when nipype is imported
os.environ.setdefault("NIPYPE_NO_ET", "1")

import numpy as np
import pytest

from critsde.spaces import ExponentPair, space_axis


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo acceptance runs (minutes)")


@pytest.fixture
def exps():
    return ExponentPair(p=2.0, q=4.0, d=1, T=1.0)


@pytest.fixture
def exps_half():
    return ExponentPair(p=2.0, q=4.0, d=1, T=0.5)


@pytest.fixture
def axis():
    return space_axis(8.0, 1.0 / 32)


@pytest.fixture
def gaussian(axis):
    return np.exp(-axis ** 2 / 2.0) / np.sqrt(2 * np.pi)
