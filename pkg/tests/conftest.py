import dataclasses

import pytest

from optospring.model import load_config

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def experiment_config():
    return load_config("experiment")


@pytest.fixture(scope="session")
def ideal_config():
    return load_config("ideal")


@pytest.fixture()
def cold_noise(experiment_config):
    """Bath and laser both quiet."""
    return dataclasses.replace(experiment_config.noise, temperature=0.0,
                               freq_noise_amp=0.0)


@pytest.fixture()
def thermal_only_noise(experiment_config):
    """300 K bath, no laser frequency noise."""
    return dataclasses.replace(experiment_config.noise, freq_noise_amp=0.0)
