from __future__ import annotations

import os

import pytest

from graspsim.scenario import Scenario, load_scenario_file

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "..", "scenarios")


@pytest.fixture(scope="session")
def approach_scenario() -> Scenario:
    return load_scenario_file(os.path.join(SCENARIO_DIR, "approach.scn"))


@pytest.fixture(scope="session")
def empty_scenario() -> Scenario:
    return load_scenario_file(os.path.join(SCENARIO_DIR, "empty.scn"))
