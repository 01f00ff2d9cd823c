# ABOUTME: Shared fixtures: the two reference environment laws and fixed environments drawn from them.
# ABOUTME: Reference laws are TwoPoint((0.4, 0.8), q=0.3) (nestling) and constant p = 0.75.

import pytest

from rwre_lab.environment import Environment, discrete, two_point


@pytest.fixture
def nestling_spec():
    """omega_0 = 0.4 w.p. 0.3, 0.8 w.p. 0.7: v_P = 3/13, s ~ 2.94"""
    return two_point(0.4, 0.8, 0.3)


@pytest.fixture
def constant_spec():
    """omega_0 = 0.75 everywhere: v_P = 1/2, f = 2"""
    return discrete([(0.75, 1.0)])


@pytest.fixture
def nestling_env(nestling_spec):
    return Environment(nestling_spec, seed=7)


@pytest.fixture
def constant_env(constant_spec):
    return Environment(constant_spec, seed=0)
