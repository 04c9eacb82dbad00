import pytest
from hypothesis import settings

from opsim.application import AppConfig, TrafficModel
from opsim.forwarding import DataItem
from opsim.link import LinkConfig, StaticGraph
from opsim.mobility import Mobility
from opsim.simulation import ForwardingConfig, Network

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def static_net(n, edges=None, positions=None, protocol="epidemic", t_end=100.0, seed=1, link=None, **fwd):
    """Network without traffic processes; items are injected by hand."""
    if positions is None:
        positions = [(0.0, 0.0)] * n
    conn = StaticGraph(n, edges) if edges is not None else None
    return Network.build(
        n,
        Mobility.static(positions),
        t_end,
        seed=seed,
        link=link or LinkConfig(),
        forwarding=ForwardingConfig(protocol, **fwd),
        app=None,
        connectivity=conn,
    )


def inject(net, node, item_id, destination=None, t=0.0, size=1000):
    item = DataItem(item_id, node, t, size, destination)
    net.ledger.generated(t, node, item_id, size, destination)
    net.stacks[node].fwd.inject(item)
    return item


@pytest.fixture
def clique5_edges():
    return [(a, b) for a in range(5) for b in range(a + 1, 5)]


def small_app(**kw):
    kw.setdefault("traffic", TrafficModel("exponential", 600.0))
    return AppConfig(**kw)


ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        ACCEPTANCE.append(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
        print(ACCEPTANCE[-1])

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
