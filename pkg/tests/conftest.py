import time

import pytest

from teleadapt.sim import default_config, run_scenario


class TimedRun:
    def __init__(self, log, wall_time):
        self.log = log
        self.wall_time = wall_time


def _timed(cfg):
    t0 = time.perf_counter()
    log = run_scenario(cfg)
    return TimedRun(log, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def scenario_a_composite():
    """Full free-motion run with the shipped defaults (shared across criteria)."""
    return _timed(default_config("A", "composite"))


@pytest.fixture(scope="session")
def scenario_a_classical():
    return _timed(default_config("A", "classical"))


@pytest.fixture(scope="session")
def scenario_b_composite():
    return _timed(default_config("B", "composite"))
