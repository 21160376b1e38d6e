import os
from importlib import resources

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from multitree_lqg import graph as g
from multitree_lqg import model as m
from multitree_lqg import serialize as ser

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA = resources.files("multitree_lqg").joinpath("data")

# lines reported by the acceptance suite, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def fixture_path(name: str) -> str:
    return str(DATA.joinpath(name))


@pytest.fixture
def five_node_problem():
    return ser.load_problem(fixture_path("five_node.json"))


@pytest.fixture
def four_node_problem():
    return ser.load_problem(fixture_path("four_node.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def five_node_a2():
    return m.random_instance(g.five_node(), 1, 3, seed=7)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def data_file():
    return fixture_path
