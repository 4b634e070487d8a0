import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from psnet.network import NetworkSpec

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_record():
    """Collects one pass/fail line per acceptance criterion."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def two_type(kappa2=0.3, nu1=0.5, c=(1.0, 1.0)):
    # type 0 uses resource 0; type 1 uses resources 0 and 1
    return NetworkSpec([[1, 1], [0, 1]], list(c), [nu1, kappa2], [1.0, 1.0])


def triangle(nu=0.3, c=1.0):
    return NetworkSpec([[0, 1, 1], [1, 0, 1], [1, 1, 0]], [c] * 3, [nu] * 3, [1.0] * 3)


def shared_dedicated(k=3, nu=0.25, c0=1.0, c=0.5):
    inc = [[1] * k] + [[1 if r == j else 0 for r in range(k)] for j in range(k)]
    return NetworkSpec(inc, [c0] + [c] * k, [nu] * k, [1.0] * k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
