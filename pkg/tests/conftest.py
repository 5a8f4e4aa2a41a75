import pytest

from icbf.measurements import BeaconSet

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def triangle():
    return BeaconSet.equilateral(10.0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":").split(".")[0])):
        terminalreporter.write_line(line)
