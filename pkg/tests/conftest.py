import sys
import numpy as np
import pytest

from superpose.constants import derive
from superpose.engine import StopRule, run
from superpose.family import InnerFamily
from superpose.outer import build_stage
from superpose.targets import target_by_name


@pytest.fixture(scope="session")
def p27():
    return derive(2, 7, (0.4, 0.6))


@pytest.fixture(scope="session")
def gauss():
    return target_by_name("gauss-bump", 2)


@pytest.fixture(scope="session")
def stage0(p27, gauss):
    """Stage 0 on the Gaussian bump, as the engine would build it."""
    eta = min(1.0, (p27.eps - p27.eps0) * 1.0)
    return build_stage(gauss, gauss.lipschitz, InnerFamily.initial(p27), 0, eta, p27)


@pytest.fixture(scope="session")
def rep_one_stage(p27, gauss):
    return run(gauss, p27, StopRule(K_max=1, T_max=1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
