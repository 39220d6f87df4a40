import random

import pytest

from ephemera.dht import DhtConfig, DhtNetwork
from ephemera.ephemerizer import Ephemerizer

_criteria: dict[str, str] = {}


@pytest.fixture
def net():
    return DhtNetwork.bootstrap(DhtConfig(node_count=60, replication_factor=8, seed=11))


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def server(net, rng):
    return Ephemerizer(net.clock, rng)


def pytest_runtest_logreport(report):
    marker = "test_acceptance.py::test_criterion_"
    if marker in report.nodeid and (report.when == "call" or report.outcome != "passed"):
        number = report.nodeid.split(marker, 1)[1].split("_", 1)[0]
        if report.when == "call" or number not in _criteria:
            _criteria[number] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria, key=int):
        terminalreporter.write_line(f"criterion {number}: {_criteria[number]}")
