import pytest

from samm_lab.amm import MarketPrices
from samm_lab.fees import REFERENCE_PARAMS, solve_params_for_c


@pytest.fixture(scope="session")
def reference_params():
    return REFERENCE_PARAMS


@pytest.fixture(scope="session")
def solved():
    """Certified parameter sets for the three standard fractions."""
    return {c: solve_params_for_c(c) for c in (0.003, 0.005, 0.01)}


@pytest.fixture
def unit_prices():
    return MarketPrices(1.0, 1.0)
