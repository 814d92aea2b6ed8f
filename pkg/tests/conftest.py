import numpy as np
import pytest

from jbb.estimation import gamma_k
from jbb.model import PathLossProfile, SystemConfig, db_to_linear


@pytest.fixture
def cfg_a():
    return SystemConfig(M=100, K=1, Mp=7, tau_c=500, tau_pu=10, tau_po=10, rho_u=db_to_linear(-3.0))


@pytest.fixture
def prof_a():
    return PathLossProfile((1.0,), 1.0)


@pytest.fixture
def gamma_a(cfg_a, prof_a):
    return np.atleast_1d(gamma_k(prof_a.as_array(), cfg_a.rho_u, cfg_a.tau_pu))


@pytest.fixture
def cfg_multi():
    return SystemConfig(M=64, K=4, Mp=5, tau_c=200, tau_pu=8, tau_po=6, rho_u=db_to_linear(0.0))


@pytest.fixture
def prof_multi():
    return PathLossProfile((0.3, 1.0, 2.5, 7.0), 0.5)
