import math

import numpy as np
import pytest

from warplab.warp import WarpSpec

INF = math.inf


def warp_const(c=1.0):
    return WarpSpec("constant", {"c": c})


def warp_linear():
    return WarpSpec("linear", {"a": 1.0, "b": 0.0}, (0.0, INF))


@pytest.fixture
def flat():
    return warp_const()


@pytest.fixture
def lin():
    return warp_linear()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
