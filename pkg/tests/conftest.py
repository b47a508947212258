import numpy as np
import pytest

from xy_disorder.chain import Boundary, ChainSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_chain(rng, n, gamma=0.5, beta=3.0, boundary=Boundary.OPEN):
    return ChainSpec(n, gamma, rng.normal(1.0, 0.6, n), rng.normal(1.0, 0.6, n), beta, boundary)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion; returns the verdict."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {detail}"
        print(line)
        request.config._acceptance_lines.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
