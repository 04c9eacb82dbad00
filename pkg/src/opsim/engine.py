"""Discrete-event core: event queue, clock, seeded random streams and the
inter-layer message contract shared by every node stack."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

__all__ = [
    "SchedulingInPast",
    "InvalidDistribution",
    "MalformedMessage",
    "SimEvent",
    "Simulator",
    "Dist",
    "RngStream",
    "RngStreams",
    "Message",
    "MESSAGE_KINDS",
    "pass_thru",
    "PassThru",
    "NodeStack",
]


class SchedulingInPast(ValueError):
    pass


class InvalidDistribution(ValueError):
    pass


class MalformedMessage(ValueError):
    pass


@dataclass(slots=True)
class SimEvent:
    """A unit of work addressed to one layer of one node.

    ``node`` is -1 for network-wide handlers (e.g. a shared traffic process).
    ``seq`` is assigned by the simulator on scheduling.
    """

    time: float
    node: int
    layer: str
    payload: Any = None
    seq: int = -1


class Simulator:
    """Heap-ordered event loop. Ties at equal time dispatch in insertion order."""

    def __init__(self):
        self._queue: list[tuple[float, int, SimEvent]] = []
        self._seq = 0
        self.now = 0.0
        self.handlers: dict[tuple[int, str], Callable[[SimEvent], None]] = {}
        self.dispatched = 0
        self.trace: list[tuple[float, int, int, str]] | None = None

    def register(self, node: int, layer: str, handler: Callable[[SimEvent], None]) -> None:
        self.handlers[(node, layer)] = handler

    def schedule(self, ev: SimEvent) -> SimEvent:
        if ev.time < self.now:
            raise SchedulingInPast(f"event at t={ev.time!r} scheduled when clock={self.now!r}")
        ev.seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, (ev.time, ev.seq, ev))
        return ev

    def at(self, time: float, node: int, layer: str, payload: Any = None) -> SimEvent:
        return self.schedule(SimEvent(time, node, layer, payload))

    def __len__(self):
        return len(self._queue)

    def peek_time(self) -> float:
        return self._queue[0][0] if self._queue else math.inf

    def step(self) -> SimEvent:
        time, _, ev = heapq.heappop(self._queue)
        self.now = time
        self.dispatched += 1
        if self.trace is not None:
            self.trace.append((ev.time, ev.seq, ev.node, ev.layer))
        self.handlers[(ev.node, ev.layer)](ev)
        return ev

    def run_until(self, t_end: float) -> None:
        queue = self._queue
        while queue and queue[0][0] <= t_end:
            self.step()
        self.now = max(self.now, t_end)


@dataclass(frozen=True, slots=True)
class Dist:
    """Distribution description: ``constant(a)``, ``uniform(a, b)`` or ``exponential(mean=a)``."""

    kind: str
    a: float
    b: float = 0.0

    def validate(self) -> None:
        if self.kind == "constant":
            if not (self.a >= 0 and math.isfinite(self.a)):
                raise InvalidDistribution(f"constant value must be finite and >= 0, got {self.a}")
        elif self.kind == "uniform":
            if self.a < 0 or self.b < self.a or not math.isfinite(self.b):
                raise InvalidDistribution(f"uniform bounds must satisfy 0 <= lo <= hi, got [{self.a}, {self.b}]")
        elif self.kind == "exponential":
            if not (self.a > 0 and math.isfinite(self.a)):
                raise InvalidDistribution(f"exponential mean must be > 0, got {self.a}")
        else:
            raise InvalidDistribution(f"unknown distribution kind {self.kind!r}")


STREAM_CODES = {"traffic": 1, "mobility": 2, "protocol": 3, "usefulness": 4}


class RngStream:
    """One named, reproducible random stream derived from a master seed."""

    def __init__(self, seed: int, stream_id: str, index: int = 0):
        if stream_id not in STREAM_CODES:
            raise ValueError(f"unknown stream purpose {stream_id!r}")
        self.seed = int(seed)
        self.stream_id = stream_id
        self.index = index
        ss = np.random.SeedSequence(entropy=self.seed & (2**64 - 1), spawn_key=(STREAM_CODES[stream_id], index))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def draw(self, dist: Dist) -> float:
        dist.validate()
        if dist.kind == "constant":
            return float(dist.a)
        if dist.kind == "uniform":
            return float(self.gen.uniform(dist.a, dist.b))
        return float(self.gen.exponential(dist.a))

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return float(self.gen.uniform(lo, hi))

    def integers(self, n: int) -> int:
        return int(self.gen.integers(n))

    def random(self) -> float:
        return float(self.gen.random())


class RngStreams:
    """Factory of per-purpose (and optionally per-node) streams for one run."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._cache: dict[tuple[str, int], RngStream] = {}

    def get(self, purpose: str, index: int = 0) -> RngStream:
        key = (purpose, index)
        if key not in self._cache:
            self._cache[key] = RngStream(self.seed, purpose, index)
        return self._cache[key]


# message kind -> layer that consumes it on the way up
MESSAGE_KINDS = {
    "data": "fwd",
    "summary": "fwd",
    "request": "fwd",
    "miss": "fwd",
    "neighbors": "fwd",
}


@dataclass(slots=True)
class Message:
    """Inter-layer message. Every layer boundary carries exactly these fields.

    ``destination`` is the end-to-end recipient of a data item (None for
    destination-less data); ``hop_source`` is the node that put the message
    on the air; ``payload`` holds kind-specific content (a DataItem, a set of
    ids, a neighbour delta).
    """

    kind: str | None
    source: int | None
    hop_source: int | None
    size: int | None
    destination: int | None = None
    data_id: str | None = None
    payload: Any = field(default=None, compare=True)


def pass_thru(msg: Message, direction: str) -> Message:
    """Identity adaptation: validates the contract and hands the message on."""
    if direction not in ("up", "down"):
        raise MalformedMessage(f"direction must be 'up' or 'down', got {direction!r}")
    if msg.kind not in MESSAGE_KINDS:
        raise MalformedMessage(f"message has no target layer (kind={msg.kind!r})")
    if msg.source is None or msg.hop_source is None:
        raise MalformedMessage("message is missing source/hop_source")
    if msg.size is None or msg.size < 0:
        raise MalformedMessage(f"message size must be a non-negative byte count, got {msg.size!r}")
    return msg


class PassThru:
    """Adaptation layer that lets packets traverse unchanged."""

    def __init__(self):
        self.upper = None
        self.lower = None

    def down(self, msg: Message, dest: int | None) -> None:
        self.lower.transmit(pass_thru(msg, "down"), dest)

    def up(self, msg: Message) -> None:
        self.upper.receive(pass_thru(msg, "up"))


@dataclass
class NodeStack:
    node_id: int
    app: Any
    fwd: Any
    adapt: PassThru
    link: Any
    mobility: Any

    def wire(self) -> None:
        self.adapt.upper = self.fwd
        self.adapt.lower = self.link
        self.fwd.adapt = self.adapt
        self.link.adapt = self.adapt
        if self.app is not None:
            self.app.fwd = self.fwd
