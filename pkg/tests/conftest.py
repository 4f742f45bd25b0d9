import sys

import numpy as np
import pytest
from hypothesis import settings as hsettings

hsettings.register_profile("repo", derandomize=True, deadline=None)
hsettings.load_profile("repo")

from sagin_mec.ao import initial_point
from sagin_mec.scenario import SolverSettings, generate_scenario


@pytest.fixture(scope="session")
def desk():
    """M=4, K=2, N=8 scenario used across the module tests."""
    return generate_scenario(4, 2, 8, 200, 7)


@pytest.fixture(scope="session")
def desk_start(desk):
    return initial_point(desk)


@pytest.fixture(scope="session")
def tiny():
    """M=2, K=2, N=4 scenario small enough for exhaustive oracles."""
    return generate_scenario(2, 2, 4, 120, 3)


@pytest.fixture
def settings():
    return SolverSettings()


def one_cell(**overrides):
    """M=1, K=1, N=2 scenario with the UAV parked over the MU at (0, 0)."""
    s = generate_scenario(1, 1, 2, 10, 1, **overrides)
    return s.replace(mu_positions=np.zeros((1, 2)), uav_start=np.zeros((1, 2)), uav_end=np.zeros((1, 2)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
