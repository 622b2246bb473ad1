import pytest

from gridcomm.cases import load_case
from gridcomm.grid import GridCase, Line, Node, NodeKind
from gridcomm.milp import KERNELS


@pytest.fixture(scope="session")
def case5() -> GridCase:
    return load_case("case5")


@pytest.fixture(scope="session")
def transit_case() -> GridCase:
    return load_case("case7_transit")


@pytest.fixture(scope="session")
def case30() -> GridCase:
    return load_case("case30")


@pytest.fixture(params=sorted(KERNELS))
def kernel(request) -> str:
    return request.param


def gen(nid, pg, pg_max=None, d=0.02, pg_min=0.0):
    return Node(nid, NodeKind.GENERATOR, pg_init=pg, pg_min=pg_min,
                pg_max=pg if pg_max is None else pg_max, damping_d=d)


def load(nid, pl, pl_max=None):
    return Node(nid, NodeKind.LOAD, pl_init=pl, pl_max=pl if pl_max is None else pl_max)


def bus(nid):
    return Node(nid, NodeKind.BUS)


def line(lid, a, b, x=0.1, f_max=2.0):
    return Line(lid, a, b, x, f_max)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
