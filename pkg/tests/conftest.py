import math

import numpy as np
import pytest
from loguru import logger

from src.model.chain import chain_params

# 束缚链平衡测试用的参数：m = ν² = 1，K = 18，Ω = √20，γ = 0.05
BOUND_K = 18.0
BOUND_OMEGA = math.sqrt(20.0)
BOUND_DQ2 = 0.5 / BOUND_OMEGA
BOUND_DP2 = 0.55 * BOUND_OMEGA


@pytest.fixture(autouse=True)
def _quiet_logger():
    logger.remove()
    yield
    logger.remove()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def simple_ring():
    return chain_params(16, mass=1.0, nu2=1.0, K=0.0)


@pytest.fixture
def bound_ring():
    return chain_params(16, mass=1.0, nu2=1.0, K=1.0)


@pytest.fixture
def simple_infinite():
    return chain_params(None, mass=1.0, nu2=1.0, K=0.0)


@pytest.fixture
def bound_infinite():
    return chain_params(None, mass=1.0, nu2=1.0, K=BOUND_K)


def scenario_dict(**sections):
    """最小场景字典，各节按关键字覆盖。"""
    data = {
        "SETTINGS": {"THREADS": 1, "SEED": 7, "QUIET": True},
        "CHAIN": {"N_PARTICLES": 8},
        "GRIDS": {"T_START": 0.0, "T_STOP": 2.0, "T_COUNT": 5},
        "ANALYSIS": {"TASKS": ["modes"]},
    }
    for name, values in sections.items():
        data[name] = {**data.get(name, {}), **values}
    return data
