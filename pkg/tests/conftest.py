import pytest

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, name): acceptance criterion covered by the test")


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None and (report.when == "call" or report.failed):
        number, name = mark.args
        # a criterion passes only if every test carrying its marker passes
        prev = _CRITERIA.get(number, (name, "PASS"))[1]
        _CRITERIA[number] = (name, "PASS" if prev == "PASS" and report.passed else "FAIL")
    return report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        name, status = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number} {name}: {status}")
