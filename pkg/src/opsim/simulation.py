"""Node-stack assembly: one application, forwarding, PassThru and link layer
per node, bound to a shared simulator, ledger and connectivity model."""

from __future__ import annotations

from dataclasses import dataclass, field

from opsim.application import AppConfig, ItemFactory, TrafficProcess, Usefulness, herald_catalog
from opsim.engine import NodeStack, PassThru, RngStreams, Simulator
from opsim.forwarding import Epidemic, Odd, Rrs
from opsim.link import LinkConfig, LinkLayer, UdgConnectivity, beacon_phase, beacon_times
from opsim.metrics import Ledger
from opsim.mobility import Mobility

PROTOCOLS = ("epidemic", "rrs", "odd")


@dataclass(frozen=True)
class ForwardingConfig:
    protocol: str = "rrs"
    cache_capacity: int = 500_000
    rrs_interval: float | None = None
    odd_threshold: float = 0.5
    odd_top_k: int = 3

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"forwarding must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.cache_capacity < 1:
            raise ValueError("cache capacity must be >= 1 byte")
        if self.rrs_interval is not None and not self.rrs_interval > 0:
            raise ValueError("rrs interval must be > 0")
        if not 0.0 <= self.odd_threshold <= 1.0:
            raise ValueError("odd threshold must lie in [0, 1]")
        if self.odd_top_k < 1:
            raise ValueError("odd top_k must be >= 1")


@dataclass
class Network:
    """A fully wired simulation. Build with ``Network.build`` and call ``run``."""

    sim: Simulator
    ledger: Ledger
    stacks: list[NodeStack]
    processes: list[TrafficProcess]
    connectivity: object
    t_end: float
    usefulness: Usefulness
    streams: RngStreams
    finished: bool = field(default=False)

    @classmethod
    def build(
        cls,
        n_nodes: int,
        mobility: Mobility,
        t_end: float,
        seed: int = 1,
        link: LinkConfig | None = None,
        forwarding: ForwardingConfig | None = None,
        app: AppConfig | None = None,
        connectivity=None,
        log_sends: bool = True,
    ) -> "Network":
        link = link or LinkConfig()
        forwarding = forwarding or ForwardingConfig()
        link.validate()
        forwarding.validate()
        if len(mobility) < n_nodes:
            raise ValueError(f"mobility provides {len(mobility)} nodes, need {n_nodes}")
        sim = Simulator()
        ledger = Ledger(n_nodes, t_end, log_sends=log_sends)
        streams = RngStreams(seed)
        conn = connectivity if connectivity is not None else UdgConnectivity(Mobility(mobility.trajectories[:n_nodes]), link.range, t_end)

        catalog = herald_catalog(app.catalog_size) if app is not None and app.app == "herald" else None
        p = app.liked_probability if app is not None else 0.0
        usefulness = Usefulness(n_nodes, p, streams.get("usefulness"), catalog)

        stacks = []
        for i in range(n_nodes):
            args = (i, forwarding.cache_capacity, sim, ledger, usefulness, streams.get("protocol", i))
            if forwarding.protocol == "epidemic":
                fwd = Epidemic(*args)
            elif forwarding.protocol == "rrs":
                interval = forwarding.rrs_interval or link.beacon_interval
                fwd = Rrs(*args, interval=interval, phase=beacon_phase(i, n_nodes, interval))
            else:
                fwd = Odd(*args, threshold=forwarding.odd_threshold, top_k=forwarding.odd_top_k)
            lnk = LinkLayer(i, link, sim, conn, ledger)
            stack = NodeStack(i, None, fwd, PassThru(), lnk, mobility.trajectories[i])
            stack.wire()
            stacks.append(stack)
        for s in stacks:
            s.link.peers = [t.link for t in stacks]

        processes = []
        if app is not None and n_nodes:
            factory = ItemFactory(app, n_nodes, streams.get("traffic"), usefulness)
            if app.generation == "per_node":
                for i in range(n_nodes):
                    proc = TrafficProcess(i, factory, sim, ledger, stacks, streams.get("traffic", i + 1), t_end)
                    stacks[i].app = proc
                    processes.append(proc)
            else:
                processes.append(TrafficProcess(-1, factory, sim, ledger, stacks, streams.get("traffic", 0), t_end))

        for i in range(n_nodes):
            times = beacon_times(i, n_nodes, link.beacon_interval, t_end)
            for t, current in conn.beacon_schedule(i, times):
                sim.at(t, i, "link", ("beacon", current))
        for proc in processes:
            proc.start()
        return cls(sim, ledger, stacks, processes, conn, t_end, usefulness, streams)

    def run(self) -> Ledger:
        if self.finished:
            return self.ledger
        self.sim.run_until(self.t_end)
        for s in self.stacks:
            for msg, dest in s.link.queue:
                self.ledger.dropped(self.t_end, s.node_id, "run_end", dest, msg.data_id, msg.size)
        self.ledger.finalize(self.t_end)
        self.finished = True
        return self.ledger

    def link_stats(self) -> dict[str, int]:
        out = {"enqueued": 0, "delivered": 0, "dropped_range": 0, "dropped_full": 0, "pending": 0}
        for s in self.stacks:
            for k, v in s.link.stats.items():
                out[k] += v
            out["pending"] += s.link.pending()
        return out
