import pytest

_LINES = []


@pytest.fixture(scope="session")
def criterion():
    """``criterion(name, ok, detail)`` records one acceptance line."""

    def record(name, ok, detail=""):
        line = f"{name} {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
