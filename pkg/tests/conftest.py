import numpy as np
import pytest

from poissel.point_process import CovariateSet, TimeDomain


@pytest.fixture
def unit():
    return TimeDomain(0.0, 1.0)


@pytest.fixture
def one():
    return CovariateSet([[0.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_CRITERIA: list[tuple[int, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; returns ``passed`` so tests can assert on it."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA, key=lambda x: x[0]):
            terminalreporter.write_line(line)
