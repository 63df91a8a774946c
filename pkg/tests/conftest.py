"""Pytest configuration and shared fixtures"""

import numpy as np
import pytest

from ciphertrend.models import PriceSeries, SchemeParams, StrategyConfig
from ciphertrend.prices import SAMPLE_PATH, load_prices
from tests.helpers import TOY_LAYOUT


@pytest.fixture(scope="session")
def small_params() -> SchemeParams:
    """Insecure ring degree with the full twelve-prime chain; fast enough for every test"""
    return SchemeParams.generate(**TOY_LAYOUT)


@pytest.fixture(scope="session")
def sample_prices() -> PriceSeries:
    """The shipped 200-day AAPL sample"""
    return load_prices(SAMPLE_PATH)


@pytest.fixture
def short_prices(sample_prices) -> PriceSeries:
    """First 60 sample days: warm-up plus a short run of decisions"""
    return PriceSeries(
        ticker=sample_prices.ticker,
        dates=sample_prices.dates[:60],
        closes=sample_prices.closes[:60],
    )


@pytest.fixture
def strategy() -> StrategyConfig:
    return StrategyConfig()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20150101)
