import numpy as np
import pytest

from qplab.arithmetic import Frequency
from qplab.cocycles import TrigPolynomial


@pytest.fixture(scope="session")
def golden():
    return Frequency.golden()


@pytest.fixture(scope="session")
def harper():
    """2a cos 2 pi x + 2b cos 4 pi x with a = 3, b = 0.3."""
    return TrigPolynomial.extended_harper(3.0, 0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: dict = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(number, ok, detail=""):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
