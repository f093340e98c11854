import pytest

CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""

    def report(number, ok, detail):
        CRITERIA[number] = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        assert ok, detail

    return report


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[number])
