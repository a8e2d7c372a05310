import pytest

_LINES = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line, echo it, then fail the test if it did not hold."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def record(n, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n:>2} {title}: {detail}"
        _LINES.append((n, line))
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
