import pytest

from stratnet.simulate import SimConfig, simulate


@pytest.fixture(scope="session")
def small_sim():
    """A small seeded synthetic dataset shared by the slower tests."""
    return simulate(SimConfig(n_authors=30, n_snapshots=3, n_background=120, seed=3))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
