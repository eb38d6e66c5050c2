import math

import numpy as np
import pytest

from dmap import MapConfig, SensorModel, SensorPose


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def panoramic_sensor():
    return SensorModel(20.0, 2 * math.pi, math.radians(60), math.radians(1.0))


@pytest.fixture
def front_sensor():
    return SensorModel(15.0, math.radians(90), math.radians(60), math.radians(1.0))


def cube_config(d=0.2, half=8.0, **kw):
    return MapConfig(d, np.full(3, -half), np.full(3, half), **kw)


def origin_pose():
    return SensorPose.identity()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
