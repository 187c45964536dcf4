import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion gate")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when != "call" and not report.failed:
        return
    ok = report.passed
    detail = "; ".join(v for k, v in report.user_properties if k == "detail")
    prev_ok, _, prev_detail = _RESULTS.get(number, (True, title, ""))
    _RESULTS[number] = (prev_ok and ok, title, "; ".join(d for d in (prev_detail, detail) if d))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        ok, title, detail = _RESULTS[number]
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {title}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)
