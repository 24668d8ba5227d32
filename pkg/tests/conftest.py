import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def record(number, title, passed, detail=""):
    ACCEPTANCE[number] = (title, bool(passed), detail)
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title}" + (f" ({detail})" if detail else "")
    print(line)
    return passed


@pytest.fixture
def data_dir():
    return DATA


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title}" + (f" ({detail})" if detail else ""))
