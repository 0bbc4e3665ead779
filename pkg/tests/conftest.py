import numpy as np
import pytest

_CRITERIA = {}


def record_criterion(number: int, name: str, passed: bool, detail: str = "") -> None:
    _CRITERIA[number] = (name, passed, detail)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        name, passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {name}: {detail}")
