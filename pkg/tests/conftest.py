"""Collects the outcome of every ``criterion``-marked test for a summary block."""

import pytest

_RESULTS: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = getattr(item, "criterion_detail", "")
    _RESULTS[number] = ("PASS" if report.passed else "FAIL", title, detail)


@pytest.fixture
def detail(request):
    """Tests call ``detail("...")`` to attach a one-line summary to their criterion."""
    def put(text: str) -> None:
        request.node.criterion_detail = text
    return put


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, title, text = _RESULTS[number]
        line = f"criterion {number} [{status}] {title}"
        if text:
            line += f" :: {text}"
        terminalreporter.write_line(line)
