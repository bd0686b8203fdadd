import numpy as np
import pytest

from linkforms.knots_linking import hopf_pair
from linkforms.parametrix_asym import CurveGeometrySpec, TubeGrid, eta_recursion


@pytest.fixture(scope="session")
def hopf():
    return hopf_pair()


@pytest.fixture(scope="session")
def circle_recursion():
    spec = CurveGeometrySpec("circle", 1.0)
    return eta_recursion(spec, TubeGrid(spec, 64, 64, 64), 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion; printed at the end of the run."""
    def record(number, title, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
        _ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
