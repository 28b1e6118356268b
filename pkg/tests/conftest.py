import os
import sys

import pytest

# Add the src directory to Python path so tests import modules like the entry scripts do
sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'src'))

from edge_core.scenario import ScenarioConfig, generate  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end runs of the full algorithms (minutes)")


def make_scenario(n_users: int = 10, n_servers: int = 2, seed: int = 2024, **overrides):
    return generate(ScenarioConfig(n_users=n_users, n_servers=n_servers, seed=seed, **overrides))


@pytest.fixture(scope="session")
def default_scenario():
    """10 users, 2 servers, seed 2024."""
    return make_scenario()


@pytest.fixture(scope="session")
def small_scenario():
    return make_scenario(3, 2, seed=7)


@pytest.fixture
def scenario_factory():
    return make_scenario
