import numpy as np
import pytest
from hypothesis import settings

from acimtools import example_maps

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def ex1():
    return example_maps.example1()


@pytest.fixture(scope="session")
def ex2():
    return example_maps.example2()


@pytest.fixture(scope="session")
def ex4():
    return example_maps.example4()


@pytest.fixture(scope="session")
def neutral():
    return example_maps.neutral_1d()


@pytest.fixture(scope="session")
def neutral_half():
    return example_maps.neutral_1d(example_maps.ExampleSpec(example_id="neutral1d", gamma=0.5))


@pytest.fixture(scope="session")
def fold2():
    return example_maps.fold_map(2, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
