import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from probrobust.attack import TrainConfig, train  # noqa: E402
from probrobust.data import make_moons, split  # noqa: E402
from probrobust.model import init_network  # noqa: E402


@pytest.fixture(scope="session")
def moons_net():
    """Small net trained on two-moons; shared by oracle-backed tests."""
    ds = make_moons(400, 0.1, seed=3)
    tr, te = split(ds, 0.5, seed=3)
    net = init_network([2, 16, 16, 2], seed=3)
    res = train(net, tr, TrainConfig(mode="standard", epochs=60, lr=0.1, seed=3))
    return res.net, te
