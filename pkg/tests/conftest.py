import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

REPO = Path(__file__).resolve().parents[1]
_ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return REPO / "data"


@pytest.fixture
def criterion():
    """Record an acceptance verdict so it is printed in the terminal summary."""

    def record(number: int, passed: bool, detail: str):
        _ACCEPTANCE.append((number, bool(passed), detail))
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
