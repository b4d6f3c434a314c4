import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """Record a one-line verdict for the terminal summary."""
    def emit(tag: str, ok: bool, detail: str = ""):
        line = f"{tag}: {'PASS' if ok else 'FAIL'} {detail}".rstrip()
        _LINES.append(line)
        print(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
