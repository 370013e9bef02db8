from __future__ import annotations

import pytest

from triality.integrator import SolverConfig
from triality.pipeline import solve
from triality.potential import Monomial

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


@pytest.fixture(scope="session")
def quadratic():
    return Monomial(1.0, 2.0)


@pytest.fixture(scope="session")
def zero_cost():
    return Monomial(0.0, 2.0)


@pytest.fixture(scope="session")
def benchmark(quadratic):
    """b = r**2, N = 2, sigma = 1, R = 10 at the default 2000-point grid."""
    return solve(quadratic, SolverConfig(N=2, sigma=1.0, R=10.0))


@pytest.fixture(scope="session")
def benchmark_r5(quadratic):
    return solve(quadratic, SolverConfig(N=2, sigma=1.0, R=5.0))


@pytest.fixture(scope="session")
def flat(zero_cost):
    return solve(zero_cost, SolverConfig(N=2, sigma=1.0, R=5.0, grid_points=200))


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE[report.nodeid] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (outcome, detail) in _ACCEPTANCE.items():
        name = nodeid.split("::")[-1]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}  {detail}")
