import pytest

from tsnprio.config import ShaperConfig
from tsnprio.model import Flow, Link, Network, Node, NodeKind, PriorityClass, shortest_route

GBPS = 1_000_000_000
TT = PriorityClass.TT
A = PriorityClass.AVB_A
B = PriorityClass.AVB_B
BE = PriorityClass.BE


def build(switches, sw_edges, es_attach, rate=GBPS, prop=0, proc=0):
    """Network from switch ids, undirected switch edges and ``{es: switch}``."""
    nodes = [Node(s, NodeKind.SW) for s in switches] + [Node(e, NodeKind.ES) for e in es_attach]
    links = []
    for a, b in list(sw_edges) + list(es_attach.items()):
        links.append(Link(a, b, rate, prop, proc))
        links.append(Link(b, a, rate, prop, proc))
    return Network(nodes, links)


def line(n_sw=1, rate=GBPS, prop=0, proc=0):
    """es 100 - sw0 - ... - sw(n-1) - es 101, plus spare es 102 on sw0 and 103 on the last switch."""
    sws = list(range(n_sw))
    edges = [(i, i + 1) for i in range(n_sw - 1)]
    return build(sws, edges, {100: 0, 101: n_sw - 1, 102: 0, 103: n_sw - 1}, rate, prop, proc)


def flow(net, fid, src, dst, period, ddl, cls, size=1500):
    return Flow(fid, src, dst, period, size, ddl, cls, shortest_route(net, src, dst))


@pytest.fixture
def cfg():
    return ShaperConfig()


@pytest.fixture
def bare():
    """No framing overhead and no preemption pad, matching the hand examples."""
    return ShaperConfig(include_overhead=False, preemption_pad=False)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
