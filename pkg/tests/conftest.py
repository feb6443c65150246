import numpy as np
import pytest

import acceptance_log
from iiorbit.config import build_scenario, demo_config
from iiorbit.integrators import IntegratorConfig
from iiorbit.mechmodel import default_furuta, default_pendubot
from iiorbit.simcore import simulate_closed_loop
from iiorbit.synthesis import furuta_profile, pendubot_profile


@pytest.fixture(scope="session")
def furuta_sys():
    return default_furuta()


@pytest.fixture(scope="session")
def pendubot_sys():
    return default_pendubot()


@pytest.fixture(scope="session")
def furuta_prof(furuta_sys):
    return furuta_profile(furuta_sys, k1=5.0, gamma1=5.0, gamma2=5.0)


@pytest.fixture(scope="session")
def pendubot_prof(pendubot_sys):
    return pendubot_profile(pendubot_sys, k2=-1.0, gamma1=10.0, gamma2=5.0)


def _demo(name):
    cfg = demo_config(name)
    sys_, prof = build_scenario(cfg)
    return sys_, prof, simulate_closed_loop(sys_, prof, np.array(cfg.x0), IntegratorConfig(t_end=30.0))


@pytest.fixture(scope="session")
def furuta_demo():
    return _demo("furuta")


@pytest.fixture(scope="session")
def pendubot_demo():
    return _demo("pendubot")


def pytest_terminal_summary(terminalreporter):
    if acceptance_log.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(acceptance_log.RESULTS):
            terminalreporter.write_line(acceptance_log.RESULTS[n])
