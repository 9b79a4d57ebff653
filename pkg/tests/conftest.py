import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from phpullback.geometry import ChartValidityWarning

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

CRITERIA: dict = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion():
    """Record an acceptance line: criterion(n, passed, detail)."""
    def record(n, passed, detail=""):
        CRITERIA[n] = (bool(passed), detail)
        return passed
    return record


@pytest.fixture(autouse=True)
def _quiet_chart_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ChartValidityWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
