import re
import sys
from collections import OrderedDict
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS))

REPO = TESTS.parent
CONFIGS = REPO / "configs"

_CRITERIA: "OrderedDict[int, list]" = OrderedDict()
_NAME = re.compile(r"test_c(\d+)_")


@pytest.fixture
def configs_dir():
    return CONFIGS


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    if not report.nodeid.split("::")[0].endswith("test_acceptance.py"):
        return
    m = _NAME.search(report.nodeid)
    if not m:
        return
    detail = dict(report.user_properties).get("detail", "")
    _CRITERIA.setdefault(int(m.group(1)), []).append((report.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        results = _CRITERIA[n]
        ok = all(p for p, _ in results)
        details = "; ".join(d for _, d in results if d)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {details}")
