import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from srnmeasure.netparse import load_network

ROOT = Path(__file__).resolve().parents[1]
NETWORKS = ROOT / "networks"
sys.path.insert(0, str(Path(__file__).resolve().parent))

settings.register_profile("repo", deadline=None, database=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much])
settings.load_profile("repo")


def network_path(name: str) -> Path:
    return NETWORKS / f"{name}.srn"


@pytest.fixture
def net():
    return lambda name: load_network(network_path(name))


# acceptance criteria record one line each; printed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
