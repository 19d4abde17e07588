import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from invmrsort.core import CriterionSpec, Direction, MRSortModel

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def unit_specs(n, directions=None):
    directions = directions or [Direction.GAIN] * n
    return [CriterionSpec(f"c{i}", 0.0, 1.0, d) for i, d in enumerate(directions)]


def simple_model(approved, weights, lam, directions=None):
    """Model on [0, 1] scales; ``approved[i]`` lists the sets of criterion i by level."""
    n = len(approved)
    dirs = directions or [row[0].direction for row in approved]
    return MRSortModel(unit_specs(n, dirs), weights, lam, approved, len(approved[0]) + 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
