from __future__ import annotations

import numpy as np
import pytest

from impactbench.biped import RobotSpec
from impactbench.controllers import make_controller
from impactbench.impactor import ImpactorSpec
from impactbench.protocol import BenchConfig
from impactbench.simcore import SimConfig


@pytest.fixture
def robot_spec():
    return RobotSpec()


@pytest.fixture
def impactor_spec():
    return ImpactorSpec()


@pytest.fixture
def sim_config():
    return SimConfig()


@pytest.fixture
def bench():
    return BenchConfig()


@pytest.fixture
def tm_controller():
    return make_controller("tm_analog")


@pytest.fixture
def tl_controller():
    return make_controller("tl_analog")


@pytest.fixture
def bb_controller():
    return make_controller("bb_analog")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
