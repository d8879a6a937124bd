import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run replication-scale tests"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: replication-scale test, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture
def chain_data(rng):
    """A 120 x 3 chain 1 -> 2 -> 3 with fixed coefficients."""
    T = 120
    data = np.zeros((T, 3))
    data[:, 0] = rng.normal(size=T)
    data[:, 1] = 0.8 * data[:, 0] + rng.normal(scale=0.5, size=T)
    data[:, 2] = -0.6 * data[:, 1] + rng.normal(scale=0.5, size=T)
    return data
