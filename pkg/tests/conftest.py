"""Collects acceptance outcomes and prints one verdict line per criterion."""

import re

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_RESULTS: dict = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2).replace("_", " "))
    if report.when == "call" or report.failed:
        _RESULTS[key] = _RESULTS.get(key, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for (k, name), ok in sorted(_RESULTS.items()):
        terminalreporter.write_line(f"criterion {k} ({name}): {'PASS' if ok else 'FAIL'}")
