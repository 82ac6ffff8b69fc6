import re

import pytest

ACCEPTANCE = re.compile(r"test_(a\d+)_")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    match = ACCEPTANCE.match(item.name)
    if match and (report.when == "call" or report.failed):
        detail = dict(item.user_properties).get("detail", "")
        results = item.config.stash.setdefault(_RESULTS, {})
        if report.when == "call" or match.group(1) not in results:
            results[match.group(1).upper()] = (report.passed, detail)


_RESULTS = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: int(k[1:])):
        passed, detail = results[key]
        terminalreporter.write_line(f"{key} {'PASS' if passed else 'FAIL'}  {detail}")
