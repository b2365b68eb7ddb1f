import numpy as np
import pytest

from spreadtime.model import homogeneous_spec, two_group_spec

TABLE1_MEAN = 4.14e-4
TABLE1 = np.array([[7.17e-4, 3.72e-4], [3.72e-4, 1.93e-4]])

_ACCEPTANCE = []


def record_criterion(number: int, title: str, passed: bool, detail: str = "") -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title}"
    if detail:
        line += f" ({detail})"
    _ACCEPTANCE.append((number, line))
    print(line)


@pytest.fixture
def record():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)


@pytest.fixture
def homog100():
    return homogeneous_spec(100, TABLE1_MEAN, 1)


@pytest.fixture
def table1_spec():
    return two_group_spec((50, 50), TABLE1, (1, 0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
