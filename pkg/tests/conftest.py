import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """``report(label, ok, detail)`` prints a PASS/FAIL line and asserts ``ok``."""
    def _report(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {label}: {detail}"
        print(line)
        _LINES.append(line)
        assert ok, line
    return _report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
