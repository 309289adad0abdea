import numpy as np
import pytest

from formseek.scenarios import load_scenario, run


@pytest.fixture(scope="session")
def rect_scenario():
    return load_scenario("rectangle")


@pytest.fixture(scope="session")
def dtet_scenario():
    return load_scenario("double-tetrahedron")


# the full simulation runs are shared across test modules; they dominate
# the suite runtime, so run each exactly once

@pytest.fixture(scope="session")
def rect_run7(rect_scenario):
    return run(rect_scenario)


@pytest.fixture(scope="session")
def rect_run1(rect_scenario):
    return run(rect_scenario, omega=1.0)


@pytest.fixture(scope="session")
def dtet_run7(dtet_scenario):
    return run(dtet_scenario)


@pytest.fixture(scope="session")
def dtet_run1(dtet_scenario):
    return run(dtet_scenario, omega=1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
