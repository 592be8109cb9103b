import numpy as np
import pytest

from offline_cmdp.counterexamples import build_figure1_mdp
from offline_cmdp.generators import random_cmdp


@pytest.fixture
def fig1():
    return build_figure1_mdp()


@pytest.fixture
def small_cmdp():
    return random_cmdp(6, 3, 1, gamma=0.8, seed=11, thresholds=[0.2])


def random_policy(rng, S, A):
    p = rng.random((S, A)) + 1e-3
    return p / p.sum(axis=1, keepdims=True)
