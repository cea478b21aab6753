import pytest

from ruinrk import Exponential, Gamma2, ModelParams, ParetoLomax


@pytest.fixture
def gamma_table1_model():
    return ModelParams(theta=0.2, claims=Gamma2(2.4))


@pytest.fixture
def gamma_table2_model():
    return ModelParams(theta=1.5, claims=Gamma2(1.0))


@pytest.fixture
def pareto_model():
    return ModelParams(theta=1.0, claims=ParetoLomax(1))


@pytest.fixture
def exp_model():
    return ModelParams(theta=0.2, claims=Exponential(1.0))
