import pytest

from factory import Factory


@pytest.fixture
def fx():
    return Factory(4)


@pytest.fixture
def fx7():
    return Factory(7)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
