import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from envaug.assets import DESIGN_LIBRARY, SCENARIO_DIR, STRUCTURE_LIBRARY, shipped_templates
from envaug.design_library import read_design_library
from envaug.elevation_map import ElevationMap
from envaug.structures import read_structure_library

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

GOLDEN_DIR = Path(__file__).parent / "golden"

# lines collected by test_acceptance and printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def templates():
    return shipped_templates()


@pytest.fixture(scope="session")
def structures():
    return read_structure_library(STRUCTURE_LIBRARY)


@pytest.fixture(scope="session")
def design_library():
    return read_design_library(DESIGN_LIBRARY)


@pytest.fixture(scope="session")
def scenario_dir():
    return SCENARIO_DIR


def step_map(rows=12, cols=16, low=0.0, high=0.16, split=8, res=0.04):
    h = np.full((rows, cols), low)
    h[:, split:] = high
    return ElevationMap(res, h)


def gap_map(rows=12, left=10, gap=4, right=10, height=0.30, res=0.04):
    h = np.full((rows, left + gap + right), height)
    h[:, left : left + gap] = np.nan
    return ElevationMap(res, h)


class RobotStub:
    def __init__(self, x, y):
        self.position = (x, y)
