import pytest

_VERDICTS = {}


@pytest.fixture
def criterion():
    """Recorder for acceptance verdicts; each call prints one PASS/FAIL line."""

    def record(number, title, ok, detail):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _VERDICTS[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[number])
