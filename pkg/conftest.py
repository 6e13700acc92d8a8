import pytest

from ext.service.fast import ModelParams, effective_potential
from ext.service.slow import beta_param, solve_spectrum


@pytest.fixture(scope="session")
def params_50():
    return ModelParams.from_mass_ratio(50.0)


@pytest.fixture(scope="session")
def pot_50(params_50):
    return effective_potential(params_50)


@pytest.fixture(scope="session")
def beta_50(params_50):
    return beta_param(params_50)


@pytest.fixture(scope="session")
def spectrum_50(params_50, pot_50):
    """Six levels for M/m = 50, r0 = 1, bump profile"""
    return solve_spectrum(params_50, 6, pot=pot_50)
