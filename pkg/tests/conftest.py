import pytest

from ecpru.confgraph import build_graph
from ecpru.ecru import ComputationModel
from ecpru.rtm import builtin_machine, duplicate

# criterion lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def machines():
    return {name: duplicate(builtin_machine(name, 4)) for name in ("sweep", "parity", "disjunction")}


@pytest.fixture(scope="session")
def graphs(machines):
    return {name: build_graph(tm) for name, tm in machines.items()}


@pytest.fixture(scope="session")
def parity_model(machines):
    return ComputationModel.build(machines["parity"])


@pytest.fixture(scope="session")
def sweep_model(machines):
    return ComputationModel.build(machines["sweep"])


@pytest.fixture(scope="session")
def disjunction_model(machines):
    return ComputationModel.build(machines["disjunction"])
