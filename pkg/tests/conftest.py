import pytest

from landslide_xai.dataset import make_surrogate


@pytest.fixture(scope="session")
def surrogate():
    return make_surrogate()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
