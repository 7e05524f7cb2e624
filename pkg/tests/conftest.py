"""Shared pytest wiring.

Tests marked @pytest.mark.acceptance("<criterion>") feed a summary block
printed at the end of the run, one line per criterion:

    [ACCEPTANCE] <criterion>: PASSED|FAILED

A criterion spanning several tests is PASSED only if all of them pass.
"""

import pytest

_RESULTS: dict[str, bool] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): tag a test as part of an acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    if report.when == "setup" and report.failed:
        _RESULTS[name] = False
    if report.when == "call":
        _RESULTS[name] = _RESULTS.get(name, True) and report.passed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name in sorted(_RESULTS):
        status = "PASSED" if _RESULTS[name] else "FAILED"
        terminalreporter.write_line(f"[ACCEPTANCE] {name}: {status}")
