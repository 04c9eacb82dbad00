"""Traffic generators (Promote, Herald, Bruit) and usefulness labelling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from opsim.engine import Dist, RngStream, SimEvent, Simulator
from opsim.forwarding import DataItem
from opsim.metrics import Ledger

APPS = ("promote", "herald", "bruit")
TRAFFIC_KINDS = ("constant", "uniform", "exponential")


class InvalidModel(ValueError):
    pass


class CatalogExhausted(RuntimeError):
    pass


class NoValidDestination(ValueError):
    pass


@dataclass(frozen=True)
class TrafficModel:
    """Inter-generation time model. Uniform bounds default to mean/2 .. 3*mean/2."""

    kind: str = "exponential"
    mean_interval: float = 7200.0
    lo: float | None = None
    hi: float | None = None

    def bounds(self) -> tuple[float, float]:
        if self.lo is None and self.hi is None:
            return 0.5 * self.mean_interval, 1.5 * self.mean_interval
        return float(self.lo), float(self.hi)

    def validate(self) -> None:
        if self.kind not in TRAFFIC_KINDS:
            raise InvalidModel(f"traffic kind must be one of {TRAFFIC_KINDS}, got {self.kind!r}")
        if not (self.mean_interval > 0 and math.isfinite(self.mean_interval)):
            raise InvalidModel(f"mean_interval must be > 0, got {self.mean_interval}")
        if self.kind == "uniform":
            if (self.lo is None) != (self.hi is None):
                raise InvalidModel("uniform traffic needs both lo and hi, or neither")
            lo, hi = self.bounds()
            if not 0 < lo <= hi:
                raise InvalidModel(f"uniform bounds need 0 < lo <= hi, got [{lo}, {hi}]")
            if not math.isclose((lo + hi) / 2, self.mean_interval, rel_tol=1e-12):
                raise InvalidModel(f"uniform bounds [{lo}, {hi}] do not average to {self.mean_interval}")

    def dist(self) -> Dist:
        if self.kind == "constant":
            return Dist("constant", self.mean_interval)
        if self.kind == "uniform":
            return Dist("uniform", *self.bounds())
        return Dist("exponential", self.mean_interval)


def next_generation_time(model: TrafficModel, now: float, rng: RngStream) -> float:
    model.validate()
    if model.kind == "constant":
        return now + model.mean_interval
    return now + rng.draw(model.dist())


@dataclass(frozen=True)
class AppConfig:
    app: str = "promote"
    traffic: TrafficModel = field(default_factory=TrafficModel)
    destination_mode: str = "oriented"
    catalog_size: int | None = None
    liked_probability: float = 0.25
    item_size: int = 10000
    generation: str = "per_node"

    def validate(self) -> None:
        if self.app not in APPS:
            raise InvalidModel(f"app must be one of {APPS}, got {self.app!r}")
        self.traffic.validate()
        if self.app == "bruit" and self.traffic.kind != "uniform":
            raise InvalidModel("bruit generates uniformly distributed traffic only")
        if self.destination_mode not in ("oriented", "destination_less"):
            raise InvalidModel(f"destination_mode must be 'oriented' or 'destination_less', got {self.destination_mode!r}")
        if (self.app == "herald") != (self.catalog_size is not None):
            raise InvalidModel("catalog_size is required for herald and only valid for herald")
        if self.catalog_size is not None and self.catalog_size < 1:
            raise InvalidModel("catalog_size must be >= 1")
        if not 0.0 <= self.liked_probability <= 1.0:
            raise InvalidModel("liked_probability must lie in [0, 1]")
        if self.item_size < 1:
            raise InvalidModel("item_size must be >= 1 byte")
        if self.generation not in ("per_node", "network"):
            raise InvalidModel(f"generation must be 'per_node' or 'network', got {self.generation!r}")


def herald_catalog(size: int) -> list[str]:
    return [f"herald-{k:05d}" for k in range(size)]


def assign_usefulness(nodes: int, catalog: list[str], p: float, rng: RngStream) -> dict[tuple[int, str], bool]:
    """Independent Bernoulli(p) liked flag per (node, item)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    draws = rng.gen.random((nodes, len(catalog))) < p
    return {(n, item): bool(draws[n, k]) for n in range(nodes) for k, item in enumerate(catalog)}


class Usefulness:
    """Liked lookup. Herald items are labelled before the run; items minted
    on the fly get a fresh row of labels at generation time."""

    def __init__(self, nodes: int, p: float, rng: RngStream, catalog: list[str] | None = None):
        self.nodes = nodes
        self.p = p
        self.rng = rng
        self.table: dict[tuple[int, str], bool] = {}
        if catalog:
            self.table = assign_usefulness(nodes, catalog, p, rng)

    def label(self, item_id: str) -> None:
        if (0, item_id) in self.table:
            return
        draws = self.rng.gen.random(self.nodes) < self.p
        for n in range(self.nodes):
            self.table[(n, item_id)] = bool(draws[n])

    def __call__(self, node: int, item_id: str) -> bool:
        return self.table.get((node, item_id), False)


class ItemFactory:
    """Mints items for one run: picks generator and destination, draws Herald
    items without replacement."""

    def __init__(self, cfg: AppConfig, n_nodes: int, rng: RngStream, usefulness: Usefulness):
        cfg.validate()
        self.cfg = cfg
        self.n = n_nodes
        self.rng = rng
        self.usefulness = usefulness
        self.counter = 0
        self.remaining = herald_catalog(cfg.catalog_size) if cfg.app == "herald" else None

    def generate_item(self, t: float, generator: int | None = None) -> tuple[DataItem, int]:
        if generator is None:
            generator = self.rng.integers(self.n)
        dest = None
        if self.cfg.destination_mode == "oriented":
            if self.n < 2:
                raise NoValidDestination("oriented data needs at least one other node")
            dest = self.rng.integers(self.n - 1)
            if dest >= generator:
                dest += 1
        if self.remaining is not None:
            if not self.remaining:
                raise CatalogExhausted(f"all {self.cfg.catalog_size} herald items generated")
            k = self.rng.integers(len(self.remaining))
            item_id = self.remaining.pop(k)
        else:
            tag = int(self.rng.gen.integers(2**32))
            item_id = f"{self.cfg.app[0]}{self.counter:07d}-{tag:08x}"
            self.usefulness.label(item_id)
        self.counter += 1
        item = DataItem(item_id, generator, t, self.cfg.item_size, dest, self.cfg.app)
        return item, generator


class TrafficProcess:
    """One generation process. ``node`` is the fixed generator in per-node
    mode, or -1 for the network-wide process that picks a random generator."""

    def __init__(self, node: int, factory: ItemFactory, sim: Simulator, ledger: Ledger, stacks, rng: RngStream, t_end: float):
        self.node = node
        self.factory = factory
        self.sim = sim
        self.ledger = ledger
        self.stacks = stacks
        self.rng = rng
        self.t_end = t_end
        self.generated = 0
        sim.register(node, "app", self.on_event)

    def start(self) -> None:
        self._schedule(0.0)

    def _schedule(self, now: float) -> None:
        t = next_generation_time(self.factory.cfg.traffic, now, self.rng)
        if t <= self.t_end:
            self.sim.at(t, self.node, "app")

    def on_event(self, ev: SimEvent) -> None:
        try:
            item, gen = self.factory.generate_item(ev.time, None if self.node < 0 else self.node)
        except CatalogExhausted:
            self.ledger.dropped(ev.time, max(self.node, 0), "catalog_exhausted")
            return
        self.generated += 1
        self.ledger.generated(ev.time, gen, item.id, item.size, item.destination)
        self.stacks[gen].fwd.inject(item)
        self._schedule(ev.time)
