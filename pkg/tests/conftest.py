from __future__ import annotations

import re
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, bool] = {}
_NAME = re.compile(r"test_criterion_(\d+)_")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = _NAME.match(item.name)
    if m is None:
        return
    n = int(m.group(1))
    if report.failed:
        _CRITERIA[n] = False
    elif report.when == "call":
        _CRITERIA.setdefault(n, True)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(f"criterion {n:02d} {'PASS' if _CRITERIA[n] else 'FAIL'}")
