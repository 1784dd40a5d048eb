import functools

import pytest
from hypothesis import HealthCheck, settings

from qsdpert import spectral

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@functools.lru_cache(maxsize=None)
def eigenvalue(M, n):
    return spectral.find_eigenvalue(M, n)


@pytest.fixture(scope="session")
def eig():
    """Default-config eigenvalue lookup shared across test modules."""
    return eigenvalue


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
