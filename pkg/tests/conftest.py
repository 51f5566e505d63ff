from pathlib import Path

import numpy as np
import pytest

from stftkan import ndcore

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"

# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def f64():
    with ndcore.precision(np.float64):
        yield


@pytest.fixture
def rng():
    return ndcore.Rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
