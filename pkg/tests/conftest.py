import pytest

_results: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.failed):
        detail = dict(item.user_properties).get("detail", "")
        status = "PASS" if report.passed else "FAIL"
        _results[name] = f"{status}  {name}" + (f"  ({detail})" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for line in _results.values():
        terminalreporter.write_line(line)
    passed = sum(line.startswith("PASS") for line in _results.values())
    terminalreporter.write_line(f"{passed}/{len(_results)} criteria passed")
