import numpy as np
import pytest

from eqmarket import MarketConfig


@pytest.fixture(scope="session")
def base_model() -> MarketConfig:
    """Benchmark market: queue capacity 8, logistic choice, Beta context."""
    return MarketConfig.default()


@pytest.fixture(scope="session")
def fixed_model() -> MarketConfig:
    """Benchmark market with the context pinned at scaled demand 0.4."""
    return MarketConfig.default(fixed_demand=0.4)


@pytest.fixture(scope="session")
def surge_model() -> MarketConfig:
    return MarketConfig.default(surge=True)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
