import pytest

from ftcl.bench import example1_config, example2_config, run_experiment


@pytest.fixture(scope="session")
def example1_run():
    return run_experiment(example1_config())


@pytest.fixture(scope="session")
def example2_run():
    return run_experiment(example2_config())


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
