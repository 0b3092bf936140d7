import os
import sys

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from lppsim.passage import WeightField  # noqa: E402
from lppsim.randomness import DistributionSpec, SeedContext  # noqa: E402


@pytest.fixture
def gaussian():
    return DistributionSpec.gaussian()


def field_of(spec, seed=1, sample=0, exp=0, overrides=None):
    return WeightField(spec, SeedContext(seed, exp, sample), overrides)


@pytest.fixture
def make_field():
    return field_of


def pytest_terminal_summary(terminalreporter):
    # one line per acceptance criterion, if that module ran
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    rows = getattr(mod, "RESULTS", None)
    if rows:
        terminalreporter.section("acceptance criteria")
        for row in sorted(rows):
            terminalreporter.write_line(row)
