"""WirelessIfc-style link layer: unit-disk connectivity, beacon-driven
neighbour discovery with contact bookkeeping, and a FIFO transmit queue
with size/bandwidth + fixed-delay service times."""

from __future__ import annotations

import bisect
import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from opsim.engine import Message, SimEvent, Simulator
from opsim.metrics import Ledger
from opsim.mobility import Mobility

BROADCAST = None


class QueueFull(RuntimeError):
    pass


@dataclass(frozen=True)
class LinkConfig:
    range: float = 30.0
    bandwidth: float = 125000.0
    fixed_delay: float = 0.005
    beacon_interval: float = 1.0
    queue_capacity: int = 100

    def validate(self) -> None:
        for name in ("range", "bandwidth", "fixed_delay", "beacon_interval"):
            if not getattr(self, name) > 0:
                raise ValueError(f"link.{name} must be > 0")
        if int(self.queue_capacity) != self.queue_capacity or self.queue_capacity < 1:
            raise ValueError("link.queue_capacity must be an integer >= 1")

    def service_time(self, size: int) -> float:
        return size / self.bandwidth + self.fixed_delay


@dataclass(frozen=True)
class Contact:
    pair: tuple[int, int]
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


def udg_neighbors(positions, range_: float) -> list[set[int]]:
    """Unit-disk adjacency: i ~ j iff Euclidean distance <= range (inclusive)."""
    p = np.asarray(positions, dtype=float).reshape(len(positions), -1)
    diff = p[:, None, :] - p[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    adj = d2 <= range_ * range_
    np.fill_diagonal(adj, False)
    return [set(np.flatnonzero(row).tolist()) for row in adj]


def udg_intervals(a, b, range_: float, t_end: float) -> list[tuple[float, float]]:
    """Maximal closed intervals within [0, t_end] during which trajectories
    ``a`` and ``b`` are within ``range_`` of each other.

    Relative motion is linear between the merged waypoint times, so each
    piece reduces to a quadratic inequality in time.
    """
    ts = np.union1d(a.ts, b.ts)
    ts = np.concatenate(([0.0], ts[(ts > 0.0) & (ts < t_end)], [t_end]))
    rel = b.positions_at(ts) - a.positions_at(ts)
    p0 = rel[:-1]
    d = rel[1:] - p0
    t0 = ts[:-1]
    dt = ts[1:] - t0
    r2 = range_ * range_
    qa = np.einsum("ij,ij->i", d, d)
    qb = 2.0 * np.einsum("ij,ij->i", p0, d)
    qc = np.einsum("ij,ij->i", p0, p0) - r2
    lo = np.full(len(dt), np.inf)
    hi = np.full(len(dt), -np.inf)
    still = qa == 0.0
    inside = still & (qc <= 0.0)
    lo[inside] = 0.0
    hi[inside] = 1.0
    moving = ~still
    disc = qb * qb - 4.0 * qa * qc
    ok = moving & (disc >= 0.0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        s1 = (-qb - sq) / (2.0 * qa)
        s2 = (-qb + sq) / (2.0 * qa)
    lo[ok] = np.maximum(s1[ok], 0.0)
    hi[ok] = np.minimum(s2[ok], 1.0)
    hit = np.flatnonzero(lo <= hi)
    out: list[tuple[float, float]] = []
    for k in hit:
        start = float(t0[k] + lo[k] * dt[k]) if lo[k] > 0.0 else float(t0[k])
        end = float(t0[k] + hi[k] * dt[k]) if hi[k] < 1.0 else float(ts[k + 1])
        if out and start <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], end))
        else:
            out.append((start, end))
    return out


class UdgConnectivity:
    """Unit-disk connectivity over live mobility.

    Per-pair in-range intervals are solved exactly up front (``udg_intervals``);
    range queries then reduce to interval lookups. ``geometric_*`` methods
    answer the same questions straight from positions.
    """

    def __init__(self, mobility: Mobility, range_: float, t_end: float | None = None):
        self.mobility = mobility
        self.range = range_
        self._r2 = range_ * range_
        self.n = len(mobility)
        self.t_end = t_end
        self._pairs: dict[tuple[int, int], tuple[list[float], list[float]]] | None = None
        self._cursor: list[tuple[float, list]] = []

    def _ensure(self) -> None:
        if self._pairs is not None:
            return
        if self.t_end is None:
            raise ValueError("interval queries need t_end")
        trajs = self.mobility.trajectories
        self._pairs = {}
        changes = [[] for _ in range(self.n)]
        for i in range(self.n):
            for j in range(i + 1, self.n):
                iv = udg_intervals(trajs[i], trajs[j], self.range, self.t_end)
                if iv:
                    self._pairs[(i, j)] = ([s for s, _ in iv], [e for _, e in iv])
                    for s, e in iv:
                        changes[i].append((s, 0, j))
                        changes[i].append((e, 1, j))
                        changes[j].append((s, 0, i))
                        changes[j].append((e, 1, i))
        for c in changes:
            c.sort()
        # per node: [time of last query, change list, next index, active counter]
        self._cursor = [[-np.inf, c, 0, {}] for c in changes]

    def intervals(self, a: int, b: int) -> list[tuple[float, float]]:
        self._ensure()
        starts, ends = self._pairs.get((min(a, b), max(a, b)), ([], []))
        return list(zip(starts, ends))

    def in_range(self, a: int, b: int, t: float) -> bool:
        if self.t_end is None or t > self.t_end:
            return self.geometric_in_range(a, b, t)
        self._ensure()
        iv = self._pairs.get((min(a, b), max(a, b)))
        if iv is None:
            return False
        starts, ends = iv
        k = bisect.bisect_right(starts, t) - 1
        return k >= 0 and t <= ends[k]

    def neighbors_of(self, node: int, t: float) -> set[int]:
        if self.t_end is None or t > self.t_end:
            return self.geometric_neighbors_of(node, t)
        self._ensure()
        cur = self._cursor[node]
        if t < cur[0]:
            return {j for j in range(self.n) if j != node and self.in_range(node, j, t)}
        cur[0] = t
        changes, k, active = cur[1], cur[2], cur[3]
        # closed intervals: a start applies at s <= t, an end once t > e;
        # at equal times starts sort before ends
        while k < len(changes):
            time, kind, j = changes[k]
            if kind == 0 and time <= t:
                active[j] = active.get(j, 0) + 1
            elif kind == 1 and time < t:
                active[j] -= 1
            else:
                break
            k += 1
        cur[2] = k
        return {j for j, c in active.items() if c > 0}

    def beacon_schedule(self, node: int, times: np.ndarray) -> list[tuple[float, frozenset]]:
        """(tick time, neighbour set) at every tick of ``times`` where the set
        differs from the previous tick (the first tick counts if non-empty).
        Ticks without a change are no-ops and need not be dispatched."""
        self._ensure()
        if len(times) == 0:
            return []
        phase = float(times[0])
        step = float(times[1] - times[0]) if len(times) > 1 else 1.0
        n_ticks = len(times)
        delta: dict[int, list[set]] = {}
        for j in range(self.n):
            if j == node:
                continue
            for s, e in self.intervals(node, j):
                k0 = _first_tick_at_or_after(s, phase, step)
                k1 = _last_tick_at_or_before(e, phase, step)
                if k0 > k1 or k0 >= n_ticks:
                    continue
                delta.setdefault(k0, [set(), set()])[0].add(j)
                if k1 + 1 < n_ticks:
                    delta.setdefault(k1 + 1, [set(), set()])[1].add(j)
        out = []
        current: set[int] = set()
        for k in sorted(delta):
            arrived, left = delta[k]
            current = (current - left) | arrived
            out.append((phase + k * step, frozenset(current)))
        return out

    # direct geometry ------------------------------------------------------
    def geometric_in_range(self, a: int, b: int, t: float) -> bool:
        pa = self.mobility.position_at(a, t)
        pb = self.mobility.position_at(b, t)
        return (pa[0] - pb[0]) ** 2 + (pa[1] - pb[1]) ** 2 + (pa[2] - pb[2]) ** 2 <= self._r2

    def geometric_neighbors_of(self, node: int, t: float) -> set[int]:
        trajs = self.mobility.trajectories
        px, py, pz = trajs[node].position_at(t)
        r2 = self._r2
        out = set()
        for j, tr in enumerate(trajs):
            if j == node:
                continue
            qx, qy, qz = tr.position_at(t)
            if (px - qx) ** 2 + (py - qy) ** 2 + (pz - qz) ** 2 <= r2:
                out.add(j)
        return out


def _first_tick_at_or_after(t: float, phase: float, step: float) -> int:
    k = max(0, math.ceil((t - phase) / step))
    while k > 0 and phase + (k - 1) * step >= t:
        k -= 1
    while phase + k * step < t:
        k += 1
    return k


def _last_tick_at_or_before(t: float, phase: float, step: float) -> int:
    k = math.floor((t - phase) / step)
    while phase + (k + 1) * step <= t:
        k += 1
    while k >= 0 and phase + k * step > t:
        k -= 1
    return k


def sampled_beacon_schedule(mobility: Mobility, range_: float, node: int, times: np.ndarray, chunk: int = 20000):
    """Brute-force counterpart of ``UdgConnectivity.beacon_schedule``: evaluates
    every node's position at every tick and diffs consecutive neighbour sets."""
    trajs = mobility.trajectories
    n = len(trajs)
    r2 = range_ * range_
    out = []
    prev = np.zeros(n, dtype=bool)
    for s in range(0, len(times), chunk):
        tt = times[s : s + chunk]
        me = trajs[node].positions_at(tt)
        adj = np.zeros((len(tt), n), dtype=bool)
        for j, tr in enumerate(trajs):
            if j == node:
                continue
            d = tr.positions_at(tt) - me
            adj[:, j] = np.einsum("ij,ij->i", d, d) <= r2
        shifted = np.vstack([prev[None, :], adj[:-1]])
        for k in np.flatnonzero((adj != shifted).any(axis=1)):
            out.append((float(tt[k]), frozenset(np.flatnonzero(adj[k]).tolist())))
        prev = adj[-1]
    return out


class StaticGraph:
    """Fixed adjacency, independent of position (for topologies a unit disk
    cannot realise)."""

    def __init__(self, n: int, edges: Sequence[tuple[int, int]]):
        self.n = n
        self.adj = [set() for _ in range(n)]
        for a, b in edges:
            if a == b:
                continue
            self.adj[a].add(b)
            self.adj[b].add(a)

    def in_range(self, a: int, b: int, t: float) -> bool:
        return b in self.adj[a]

    def neighbors_of(self, node: int, t: float) -> set[int]:
        return set(self.adj[node])

    def beacon_schedule(self, node: int, times: np.ndarray) -> list[tuple[float, frozenset]]:
        if self.adj[node] and len(times):
            return [(float(times[0]), frozenset(self.adj[node]))]
        return []


def beacon_phase(node: int, n_nodes: int, interval: float) -> float:
    return interval * node / max(n_nodes, 1)


def beacon_times(node: int, n_nodes: int, interval: float, t_end: float) -> np.ndarray:
    """Tick times phase + k*interval strictly before t_end."""
    phase = beacon_phase(node, n_nodes, interval)
    k = np.arange(int(np.ceil((t_end - phase) / interval)) + 1, dtype=float)
    times = phase + k * interval
    return times[times < t_end]


class LinkLayer:
    """Per-node link: FIFO queue, serialised service, range check at completion.

    ``peers`` is the list of every node's LinkLayer; delivery hands the frame
    to the receiver's link, which passes it up through adaptation.
    """

    def __init__(self, node: int, cfg: LinkConfig, sim: Simulator, connectivity, ledger: Ledger):
        self.node = node
        self.cfg = cfg
        self.sim = sim
        self.conn = connectivity
        self.ledger = ledger
        self.adapt = None
        self.peers: list[LinkLayer] = []
        self.queue: deque[tuple[Message, int | None]] = deque()
        self.busy = False
        self.neighbors: set[int] = set()
        self.stats = {"enqueued": 0, "delivered": 0, "dropped_range": 0, "dropped_full": 0}
        sim.register(node, "link", self.on_event)

    def on_event(self, ev: SimEvent) -> None:
        if ev.payload == "tx":
            self._complete(ev.time)
        else:
            self.beacon_tick(ev.time, ev.payload[1])

    # neighbour discovery --------------------------------------------------
    def beacon_tick(self, t: float, current: frozenset | None = None) -> tuple[set[int], set[int]]:
        """Refresh the neighbour set at ``t`` and push the delta upwards.

        ``current`` may carry a precomputed set for ``t``.
        """
        if current is None:
            current = frozenset(self.conn.neighbors_of(self.node, t))
        arrived = current - self.neighbors
        left = self.neighbors - current
        if not arrived and not left:
            return arrived, left
        self.neighbors = set(current)
        me = self.node
        for p in sorted(arrived):
            if p > me:
                self.ledger.contact_open(t, me, p)
        for p in sorted(left):
            if p > me:
                self.ledger.contact_close(t, me, p)
        note = Message("neighbors", me, me, 0, payload=(frozenset(arrived), frozenset(left), frozenset(current)))
        self.adapt.up(note)
        return arrived, left

    # data plane -----------------------------------------------------------
    def transmit(self, msg: Message, dest: int | None) -> None:
        """Enqueue ``msg`` for ``dest`` (None = local broadcast).

        Raises QueueFull after recording the drop.
        """
        self.stats["enqueued"] += 1
        if len(self.queue) >= self.cfg.queue_capacity:
            self.stats["dropped_full"] += 1
            self.ledger.dropped(self.sim.now, self.node, "queue_full", dest, msg.data_id, msg.size)
            raise QueueFull(f"node {self.node} queue at capacity {self.cfg.queue_capacity}")
        if msg.kind == "data":
            self.ledger.sent(self.sim.now, self.node, dest, msg.data_id, msg.size)
        self.queue.append((msg, dest))
        if not self.busy:
            self._start()

    def _start(self) -> None:
        msg, _ = self.queue[0]
        self.busy = True
        self.sim.at(self.sim.now + self.cfg.service_time(msg.size), self.node, "link", "tx")

    def _complete(self, t: float) -> None:
        msg, dest = self.queue.popleft()
        self.busy = False
        if dest is None:
            receivers = sorted(self.conn.neighbors_of(self.node, t))
        elif self.conn.in_range(self.node, dest, t):
            receivers = [dest]
        else:
            receivers = []
        if receivers:
            self.stats["delivered"] += 1
        else:
            self.stats["dropped_range"] += 1
            self.ledger.dropped(t, self.node, "out_of_range", dest, msg.data_id, msg.size)
        if self.queue:
            self._start()
        for r in receivers:
            self.peers[r].adapt.up(msg)
        if not receivers:
            self.adapt.upper.send_failed(msg, dest)

    def pending(self) -> int:
        return len(self.queue)
