import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from dfkd_beam.scenario import ScenarioConfig, make_dataset  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_scenario():
    return ScenarioConfig(num_trajectories=20, slots_per_trajectory=16, feature_dim=8, seed=3)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_scenario):
    return make_dataset(tiny_scenario)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
