import pytest

# acceptance verdicts, printed once at the end of the session
VERDICTS: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[key])


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        VERDICTS[f"{number:02d}"] = line
        print(line)
        assert ok, line

    return record
