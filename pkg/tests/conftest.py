import numpy as np
import pytest

from foodnet.rng import Rng


@pytest.fixture
def rng():
    return Rng(12345)


@pytest.fixture
def np_rng():
    return np.random.default_rng(7)


# one line per acceptance criterion, echoed in the terminal summary
CRITERIA_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        CRITERIA_LINES[number] = line
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA_LINES):
            terminalreporter.write_line(CRITERIA_LINES[n])
