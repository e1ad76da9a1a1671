import pytest

_CRITERIA = []


@pytest.fixture
def criterion():
    """record(number, passed, detail): one pass/fail line per acceptance criterion."""
    def record(number, passed, detail):
        _CRITERIA.append((number, bool(passed), detail))
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_CRITERIA, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
