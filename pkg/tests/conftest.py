import pytest

from cylsp.config import flagship_config
from cylsp.limit2d import build_cache, shoot_radial_ground_state
from cylsp.model import minimize_M_on_ring

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def flagship():
    return flagship_config()


@pytest.fixture(scope="session")
def cache4():
    return build_cache(4.0)


@pytest.fixture(scope="session")
def ground11():
    return shoot_radial_ground_state(1.0, 1.0, 4.0)


@pytest.fixture(scope="session")
def flagship_ring(flagship, cache4):
    return minimize_M_on_ring(flagship.spec, cache4.e11, flagship.p, flagship.region)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
