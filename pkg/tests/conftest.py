"""Collects one PASS/FAIL line per acceptance criterion and prints them after the run."""

import pytest

CRITERIA: dict[int, str] = {}


def record(number: int, name: str, passed: bool, detail: str) -> bool:
    line = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}  {name}: {detail}"
    CRITERIA[number] = line
    print(line)
    return passed


@pytest.fixture
def criterion():
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
