"""Store-and-forward cache and dissemination protocols.

Three protocols share the ``Forwarding`` base (cache, receipt/delivery
bookkeeping):

* ``Epidemic`` - unicast anti-entropy: summary vectors, then one-at-a-time
  requests for missing ids.
* ``Rrs`` - randomised rumour spreading: on a periodic tick, broadcast one
  cached item chosen uniformly at random.
* ``Odd`` - organic data dissemination. Only a two-sentence description is
  available, so this is an interpretation: on every neighbourhood change the
  significance ``(|arrived| + |left|) / max(1, |prev U current|)`` is compared
  against a threshold; significant changes broadcast the ``top_k`` most
  popular cached items (popularity = receipt count), otherwise one random
  cached item.

Broadcast flood guards: duplicates are ignored on receipt, and an item
received at time t is never rebroadcast at t.
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass, field
from itertools import islice

from opsim.engine import Message, RngStream, SimEvent, Simulator
from opsim.link import QueueFull
from opsim.metrics import Ledger

SUMMARY_HEADER = 16
SUMMARY_PER_ID = 8
CONTROL_SIZE = 24


class ItemTooLarge(ValueError):
    pass


class SessionAborted(RuntimeError):
    pass


@dataclass(frozen=True, slots=True)
class DataItem:
    id: str
    origin: int
    created_at: float
    size: int
    destination: int | None = None
    payload_tag: str | None = None

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"item size must be > 0, got {self.size}")


class Cache:
    """Byte-bounded, insertion-ordered store. Eviction is FIFO; subclasses may
    override ``victim``."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("cache capacity must be > 0")
        self.capacity = capacity
        self.entries: dict[str, tuple[DataItem, float]] = {}
        self.used = 0

    def __contains__(self, item_id: str) -> bool:
        return item_id in self.entries

    def __len__(self):
        return len(self.entries)

    def ids(self) -> list[str]:
        return list(self.entries)

    def get(self, item_id: str) -> DataItem | None:
        e = self.entries.get(item_id)
        return None if e is None else e[0]

    def inserted_at(self, item_id: str) -> float:
        return self.entries[item_id][1]

    def nth(self, k: int) -> DataItem:
        return self.entries[next(islice(iter(self.entries), k, None))][0]

    def victim(self) -> str:
        return next(iter(self.entries))

    def insert(self, item: DataItem, t: float) -> list[DataItem]:
        if item.size > self.capacity:
            raise ItemTooLarge(f"item {item.id} ({item.size} B) exceeds cache capacity {self.capacity} B")
        if item.id in self.entries:
            return []
        self.entries[item.id] = (item, t)
        self.used += item.size
        evicted = []
        while self.used > self.capacity:
            victim = self.entries.pop(self.victim())[0]
            self.used -= victim.size
            evicted.append(victim)
        return evicted


def cache_insert(cache: Cache, item: DataItem, t: float) -> list[DataItem]:
    return cache.insert(item, t)


def data_message(item: DataItem, hop: int) -> Message:
    return Message("data", item.origin, hop, item.size, item.destination, item.id, item)


class Forwarding:
    """Common store-and-forward behaviour. Subclasses implement the protocol hooks."""

    name = "base"

    def __init__(self, node: int, capacity: int, sim: Simulator, ledger: Ledger, usefulness, rng: RngStream):
        self.node = node
        self.cache = Cache(capacity)
        self.sim = sim
        self.ledger = ledger
        self.usefulness = usefulness
        self.rng = rng
        self.adapt = None
        self.neighbors: set[int] = set()
        self.seen: set[str] = set()
        sim.register(node, "fwd", self.on_event)

    # upper interface -------------------------------------------------------
    def inject(self, item: DataItem) -> bool:
        """Store a locally generated item. Returns False if it cannot be cached."""
        self.seen.add(item.id)
        if not self._store(item):
            return False
        self.on_new_item(item, None)
        return True

    # lower interface -------------------------------------------------------
    def receive(self, msg: Message) -> None:
        if msg.kind == "neighbors":
            arrived, left, current = msg.payload
            self.neighbors = set(current)
            self.on_neighbors(arrived, left, current)
        elif msg.kind == "data":
            self.on_data(msg)
        else:
            self.on_control(msg)

    def send_failed(self, msg: Message, dest: int | None) -> None:
        pass

    def on_event(self, ev: SimEvent) -> None:
        pass

    # shared helpers --------------------------------------------------------
    def _store(self, item: DataItem) -> bool:
        t = self.sim.now
        try:
            evicted = self.cache.insert(item, t)
        except ItemTooLarge:
            self.ledger.dropped(t, self.node, "item_too_large", item=item.id, size=item.size)
            return False
        for v in evicted:
            self.ledger.evicted(t, self.node, v.id)
        return True

    def accept(self, item: DataItem, hop: int) -> bool:
        """Cache a received item. Returns True if it was new to the cache."""
        if item.id in self.cache:
            return False
        if not self._store(item):
            return False
        t = self.sim.now
        if item.id not in self.seen:
            self.seen.add(item.id)
            if item.origin != self.node:
                self.ledger.received(t, self.node, hop, item.id, self.usefulness(self.node, item.id))
                if item.destination == self.node:
                    self.ledger.delivered(t, self.node, item.id, item.created_at)
        self.on_new_item(item, hop)
        return True

    def send(self, msg: Message, dest: int | None) -> bool:
        try:
            self.adapt.down(msg, dest)
        except QueueFull:
            self.send_failed(msg, dest)
            return False
        return True

    def eligible_count(self) -> int:
        """Cached items not inserted at the current instant (never rebroadcast
        in the tick they arrived). Insertion times are non-decreasing in cache
        order, so these form a prefix."""
        now = self.sim.now
        n = len(self.cache)
        k = 0
        for item_id in reversed(self.cache.entries):
            if self.cache.entries[item_id][1] < now:
                break
            k += 1
        return n - k

    # protocol hooks --------------------------------------------------------
    def on_neighbors(self, arrived, left, current) -> None:
        pass

    def on_data(self, msg: Message) -> None:
        self.accept(msg.payload, msg.hop_source)

    def on_control(self, msg: Message) -> None:
        pass

    def on_new_item(self, item: DataItem, hop: int | None) -> None:
        pass


# --------------------------------------------------------------------------
# Epidemic


@dataclass
class Session:
    peer: int
    initiator: bool
    peer_ids: set = field(default_factory=set)
    todo: deque = field(default_factory=deque)
    deferred: set = field(default_factory=set)
    awaiting: str | None = None


def summary_message(node: int, ids, initial: bool) -> Message:
    ids = tuple(ids)
    return Message("summary", node, node, SUMMARY_HEADER + SUMMARY_PER_ID * len(ids), payload=(ids, initial))


class Epidemic(Forwarding):
    """Anti-entropy once per contact, opened by the lower node id.

    Within a session the pair keeps each other informed of newly cached ids,
    so items acquired mid-contact are negotiated without a new session. A
    node never has the same id outstanding in two sessions, which keeps every
    transfer non-redundant.
    """

    name = "epidemic"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.sessions: dict[int, Session] = {}
        self.in_flight: dict[str, int] = {}
        self.transfers: list[tuple[float, int, str]] = []

    def on_neighbors(self, arrived, left, current):
        for p in sorted(left):
            self._close(p)
        for p in sorted(arrived):
            if self.node < p:
                self._open(p, initiator=True)

    def _open(self, peer: int, initiator: bool) -> Session:
        if peer in self.sessions:
            self._close(peer)
        s = Session(peer, initiator)
        self.sessions[peer] = s
        if initiator:
            self.send(summary_message(self.node, self.cache.ids(), True), peer)
        return s

    def _close(self, peer: int) -> None:
        s = self.sessions.pop(peer, None)
        if s is None:
            return
        if s.awaiting is not None:
            self._release(s.awaiting)

    def _release(self, item_id: str) -> None:
        """An outstanding request ended without the item; let deferring sessions retry it."""
        self.in_flight.pop(item_id, None)
        for s in list(self.sessions.values()):
            if item_id in s.deferred:
                s.deferred.discard(item_id)
                s.todo.appendleft(item_id)
                self._pump(s)

    def _pump(self, s: Session) -> None:
        if s.awaiting is not None or self.sessions.get(s.peer) is not s:
            return
        while s.todo:
            item_id = s.todo.popleft()
            if item_id in self.cache or item_id not in s.peer_ids:
                continue
            if item_id in self.in_flight:
                s.deferred.add(item_id)
                continue
            s.awaiting = item_id
            self.in_flight[item_id] = s.peer
            self.send(Message("request", self.node, self.node, CONTROL_SIZE, data_id=item_id), s.peer)
            return

    def on_control(self, msg: Message):
        peer = msg.hop_source
        if msg.kind == "summary":
            ids, initial = msg.payload
            if initial:
                s = self._open(peer, initiator=False)
                self.send(summary_message(self.node, self.cache.ids(), False), peer)
            else:
                s = self.sessions.get(peer)
                if s is None:
                    return
            for item_id in ids:
                if item_id not in s.peer_ids:
                    s.peer_ids.add(item_id)
                    if item_id not in self.cache:
                        s.todo.append(item_id)
            self._pump(s)
        elif msg.kind == "request":
            s = self.sessions.get(peer)
            item = self.cache.get(msg.data_id)
            if item is None:
                self.send(Message("miss", self.node, self.node, CONTROL_SIZE, data_id=msg.data_id), peer)
                return
            if s is not None:
                s.peer_ids.add(item.id)
            self.transfers.append((self.sim.now, peer, item.id))
            self.send(data_message(item, self.node), peer)
        elif msg.kind == "miss":
            s = self.sessions.get(peer)
            if s is None or s.awaiting != msg.data_id:
                return
            s.peer_ids.discard(msg.data_id)
            s.awaiting = None
            self._release(msg.data_id)
            self._pump(s)

    def on_data(self, msg: Message):
        item = msg.payload
        peer = msg.hop_source
        self.accept(item, peer)
        if self.in_flight.get(item.id) == peer:
            del self.in_flight[item.id]
        s = self.sessions.get(peer)
        if s is not None:
            s.peer_ids.add(item.id)
            if s.awaiting == item.id:
                s.awaiting = None
                self._pump(s)

    def on_new_item(self, item: DataItem, hop: int | None):
        for s in list(self.sessions.values()):
            s.deferred.discard(item.id)
            if s.peer != hop and item.id not in s.peer_ids:
                self.send(summary_message(self.node, (item.id,), False), s.peer)

    def send_failed(self, msg: Message, dest: int | None):
        if dest is not None and dest in self.sessions:
            self._close(dest)


# --------------------------------------------------------------------------
# Randomised Rumour Spreading


def rrs_pick(cache: Cache, eligible: int, rng: RngStream) -> DataItem | None:
    """Uniform choice among the first ``eligible`` cached items."""
    if eligible <= 0:
        return None
    return cache.nth(rng.integers(eligible))


class Rrs(Forwarding):
    """Broadcast one random cached item every ``interval`` while neighbours exist.

    Ticks sit on the grid ``phase + k * interval``; the timer is only armed
    while both the cache and the neighbour set are non-empty, which is
    observationally identical to an always-running timer.
    """

    name = "rrs"

    def __init__(self, *args, interval: float = 1.0, phase: float = 0.0, **kwargs):
        super().__init__(*args, **kwargs)
        self.interval = interval
        self.phase = phase
        self.armed = False
        self.broadcasts = 0

    def _arm(self) -> None:
        if self.armed or not self.neighbors or not len(self.cache):
            return
        now = self.sim.now
        k = max(0, math.ceil((now - self.phase) / self.interval))
        t = self.phase + k * self.interval
        if t < now:
            t = self.phase + (k + 1) * self.interval
        self.armed = True
        self.sim.at(t, self.node, "fwd", "rrs")

    def on_event(self, ev: SimEvent):
        self.armed = False
        self.tick()
        if self.neighbors and len(self.cache):
            self.armed = True
            self.sim.at(self._next(ev.time), self.node, "fwd", "rrs")

    def _next(self, t: float) -> float:
        k = round((t - self.phase) / self.interval)
        return self.phase + (k + 1) * self.interval

    def tick(self) -> Message | None:
        if not self.neighbors:
            return None
        item = rrs_pick(self.cache, self.eligible_count(), self.rng)
        if item is None:
            return None
        msg = data_message(item, self.node)
        self.broadcasts += 1
        self.send(msg, None)
        return msg

    def on_neighbors(self, arrived, left, current):
        self._arm()

    def on_new_item(self, item, hop):
        self._arm()


# --------------------------------------------------------------------------
# Organic Data Dissemination (interpretation)


@dataclass
class OddState:
    prev_neighbors: set = field(default_factory=set)
    popularity: Counter = field(default_factory=Counter)
    significance_threshold: float = 0.5
    top_k: int = 3

    def __post_init__(self):
        if not 0.0 <= self.significance_threshold <= 1.0:
            raise ValueError("significance_threshold must lie in [0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


def odd_significance(prev: set, arrived, left, current) -> float:
    return (len(arrived) + len(left)) / max(1, len(set(prev) | set(current)))


def top_popular(items, popularity: Counter, k: int) -> list[DataItem]:
    """The ``k`` most received items; ties broken by ascending id."""
    return sorted(items, key=lambda it: (-popularity[it.id], it.id))[:k]


def odd_on_neighborhood_change(
    state: OddState, arrived, left, current, cache: Cache, rng: RngStream, eligible: int | None = None
) -> list[DataItem]:
    """Items to broadcast for one neighbourhood change; updates ``prev_neighbors``."""
    s = odd_significance(state.prev_neighbors, arrived, left, current)
    state.prev_neighbors = set(current)
    n = len(cache) if eligible is None else eligible
    if n == 0:
        return []
    if s >= state.significance_threshold:
        items = [cache.entries[i][0] for i in islice(cache.entries, n)]
        return top_popular(items, state.popularity, state.top_k)
    return [cache.nth(rng.integers(n))]


class Odd(Forwarding):
    name = "odd"

    def __init__(self, *args, threshold: float = 0.5, top_k: int = 3, **kwargs):
        super().__init__(*args, **kwargs)
        self.state = OddState(significance_threshold=threshold, top_k=top_k)
        self.broadcasts = 0

    def on_neighbors(self, arrived, left, current):
        if not current:
            self.state.prev_neighbors = set()
            return
        for item in odd_on_neighborhood_change(
            self.state, arrived, left, current, self.cache, self.rng, self.eligible_count()
        ):
            self.broadcasts += 1
            self.send(data_message(item, self.node), None)

    def on_data(self, msg: Message):
        self.state.popularity[msg.data_id] += 1
        self.accept(msg.payload, msg.hop_source)
