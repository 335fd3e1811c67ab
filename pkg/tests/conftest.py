import pytest

_LINES = []


@pytest.fixture
def criterion_log():
    return _LINES.append


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s[7:9])):
            terminalreporter.write_line(line)
