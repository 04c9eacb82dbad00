import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from opsim.application import (
    AppConfig,
    CatalogExhausted,
    InvalidModel,
    ItemFactory,
    NoValidDestination,
    TrafficModel,
    Usefulness,
    assign_usefulness,
    herald_catalog,
    next_generation_time,
)
from opsim.engine import RngStream
from opsim.link import StaticGraph
from opsim.metrics import delivery_ratio
from opsim.mobility import Mobility
from opsim.simulation import ForwardingConfig, Network


def test_constant_next_time():
    assert next_generation_time(TrafficModel("constant", 7200.0), 0.0, RngStream(1, "traffic")) == 7200.0


def test_degenerate_uniform():
    m = TrafficModel("uniform", 7200.0, 7200.0, 7200.0)
    assert next_generation_time(m, 0.0, RngStream(1, "traffic")) == 7200.0


def test_exponential_mean_interarrival():
    rng = RngStream(5, "traffic")
    m = TrafficModel("exponential", 7200.0)
    t, n = 0.0, 100_000
    for _ in range(n):
        t = next_generation_time(m, t, rng)
    assert abs(t / n - 7200.0) / 7200.0 < 0.05


@pytest.mark.parametrize(
    "model",
    [
        TrafficModel("poisson", 10.0),
        TrafficModel("constant", 0.0),
        TrafficModel("uniform", 10.0, 2.0, 12.0),
        TrafficModel("uniform", 10.0, 12.0, 8.0),
        TrafficModel("uniform", 10.0, 5.0, None),
    ],
)
def test_invalid_models(model):
    with pytest.raises(InvalidModel):
        next_generation_time(model, 0.0, RngStream(1, "traffic"))


def test_bruit_is_uniform_only():
    with pytest.raises(InvalidModel):
        AppConfig("bruit", TrafficModel("exponential", 10.0)).validate()
    AppConfig("bruit", TrafficModel("uniform", 10.0)).validate()


def test_herald_fields_required_iff_herald():
    with pytest.raises(InvalidModel):
        AppConfig("herald").validate()
    with pytest.raises(InvalidModel):
        AppConfig("promote", catalog_size=5).validate()


def _factory(cfg, n, seed=1):
    streams_p = cfg.liked_probability
    use = Usefulness(n, streams_p, RngStream(seed, "usefulness"), herald_catalog(cfg.catalog_size) if cfg.catalog_size else None)
    return ItemFactory(cfg, n, RngStream(seed, "traffic"), use)


def test_one_node_oriented_has_no_destination():
    with pytest.raises(NoValidDestination):
        _factory(AppConfig(), 1).generate_item(0.0)


def test_herald_catalog_exhausted():
    f = _factory(AppConfig("herald", catalog_size=10), 4)
    ids = [f.generate_item(float(t))[0].id for t in range(10)]
    assert sorted(ids) == herald_catalog(10)
    with pytest.raises(CatalogExhausted):
        f.generate_item(10.0)


def test_generator_histogram_uniform():
    f = _factory(AppConfig(), 50, seed=3)
    counts = Counter(f.generate_item(float(t))[1] for t in range(10_000))
    chi2, p = stats.chisquare([counts[i] for i in range(50)])
    assert p > 0.001


def test_destination_never_generator():
    f = _factory(AppConfig(), 3, seed=4)
    for t in range(500):
        it, gen = f.generate_item(float(t))
        assert it.destination != gen and 0 <= it.destination < 3


def test_destination_less_items():
    f = _factory(AppConfig(destination_mode="destination_less"), 3)
    assert f.generate_item(0.0)[0].destination is None


@pytest.mark.parametrize("p,expect", [(1.0, True), (0.0, False)])
def test_usefulness_degenerate(p, expect):
    table = assign_usefulness(7, herald_catalog(20), p, RngStream(1, "usefulness"))
    assert len(table) == 140 and set(table.values()) == {expect}


def test_usefulness_fraction():
    table = assign_usefulness(50, herald_catalog(1000), 0.25, RngStream(9, "usefulness"))
    assert abs(np.mean(list(table.values())) - 0.25) <= 0.01


def test_usefulness_deterministic():
    a = assign_usefulness(5, herald_catalog(30), 0.5, RngStream(2, "usefulness"))
    b = assign_usefulness(5, herald_catalog(30), 0.5, RngStream(2, "usefulness"))
    assert a == b


def _app_net(app, n=4, t_end=10_000.0, protocol="epidemic"):
    edges = [(a, b) for a in range(n) for b in range(a + 1, n)]
    return Network.build(n, Mobility.static([(0, 0)] * n), t_end, seed=2, app=app,
                         forwarding=ForwardingConfig(protocol), connectivity=StaticGraph(n, edges))


@pytest.mark.parametrize("mean,t_end", [(100.0, 1000.0), (7200.0, 86_400.0), (300.0, 1000.0)])
def test_constant_count_per_process(mean, t_end):
    net = _app_net(AppConfig(traffic=TrafficModel("constant", mean)), t_end=t_end)
    ledger = net.run()
    per_node = Counter(r.node for r in ledger.records if r.kind == "generated")
    assert all(per_node[i] == math.floor(t_end / mean) for i in range(4))


def test_network_mode_single_process():
    app = AppConfig(traffic=TrafficModel("constant", 100.0), generation="network")
    ledger = _app_net(app, t_end=1000.0).run()
    assert sum(1 for r in ledger.records if r.kind == "generated") == 10


def test_herald_run_stops_at_catalog_and_never_repeats():
    app = AppConfig("herald", TrafficModel("constant", 10.0), catalog_size=6)
    net = _app_net(app, t_end=100.0)
    ledger = net.run()
    gen = [r.item for r in ledger.records if r.kind == "generated"]
    assert sorted(gen) == herald_catalog(6)
    assert {r.item for r in ledger.records if r.item} <= set(herald_catalog(6))
    assert [r.reason for r in ledger.records if r.kind == "dropped"].count("catalog_exhausted") >= 1


def test_destination_less_not_in_delivery_denominator():
    app = AppConfig("bruit", TrafficModel("uniform", 200.0), destination_mode="destination_less")
    ledger = _app_net(app, t_end=5000.0, protocol="rrs").run()
    assert all(r.destination is None for r in ledger.records if r.kind == "generated")
    assert delivery_ratio(ledger) is None
