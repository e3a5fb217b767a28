"""Per-criterion pass/fail summary for the acceptance suite.

Tests marked ``@pytest.mark.acceptance(n)`` contribute to criterion ``n``; a
criterion passes only if every test contributing to it passed.
"""

import pytest


def pytest_configure(config):
    config.acceptance_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        results = item.config.acceptance_results
        for criterion in marker.args:
            ok = report.passed and results.get(criterion, True)
            results[criterion] = ok


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.acceptance_results
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(results):
        terminalreporter.write_line(
            f"CRITERION {criterion}: {'PASS' if results[criterion] else 'FAIL'}"
        )
