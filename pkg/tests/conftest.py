import math

import pytest

import towerwalk as tw
from towerwalk.presets import (
    dyadic_geometric,
    symmetric_factorial_tails,
    symmetric_geometric,
)


@pytest.fixture(scope="session")
def dyadic():
    return dyadic_geometric()


@pytest.fixture(scope="session")
def factorial_tails():
    return symmetric_factorial_tails()


@pytest.fixture(scope="session")
def factorial_geometric():
    return symmetric_geometric()


@pytest.fixture(scope="session")
def fast_design():
    tower = tw.PowersOfTwoTower()
    seq = tw.design_fast_decay(tower, lambda t: math.log(t) if t > 1 else 0.0)
    return tower, seq


@pytest.fixture(scope="session")
def slow_design():
    tower = tw.PowersOfTwoTower()
    seq = tw.design_slow_decay(tower, math.sqrt)
    return tower, seq
