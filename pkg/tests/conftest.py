import numpy as np
import pytest

from chipmh import data
from chipmh.datasets import wdbc_path

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def wbc_path():
    return wdbc_path()


@pytest.fixture(scope="session")
def wbc(wbc_path):
    return data.load_wbc(wbc_path)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_rows(path, rows):
    path.write_text("".join(",".join(map(str, r)) + "\n" for r in rows))
    return str(path)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
