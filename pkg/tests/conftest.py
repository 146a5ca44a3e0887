import math

import pytest

from convlab.process import OUParams, Ar1Params


@pytest.fixture
def unit_process():
    """alpha = 1, Sigma = 1."""
    return OUParams.from_stationary(1.0, 1.0)


@pytest.fixture
def desk_process():
    """Daily desk calibration: alpha = 0.5, sigma = 0.01."""
    return OUParams(0.5, 0.01)


@pytest.fixture
def chain_process():
    """Sigma = 1 / (2 pi), where sqrt(2 pi Sigma) = 1."""
    return OUParams.from_stationary(1.0, 1.0 / (2.0 * math.pi))


@pytest.fixture
def backtest_ar1():
    return Ar1Params(0.3, 0.01)


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    monkeypatch.delenv("CONVLAB_SEED", raising=False)
