import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from racenav.harness.race import plan_track
from racenav.harness.track import load_track

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def large_track():
    return load_track("large_8gate")


@pytest.fixture(scope="session")
def large_traj(large_track):
    return plan_track(large_track)


@pytest.fixture(scope="session")
def small_track():
    return load_track("small_4gate")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
