"""Node movement: piecewise-linear trajectories, BonnMotion trace I/O, and
synthetic Random Waypoint / SWIM generators."""

from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from opsim.engine import RngStream


class InvalidConfig(ValueError):
    pass


class UnknownNode(KeyError):
    pass


class TraceError(ValueError):
    """Base for BonnMotion parse errors; carries 1-based line and token index."""

    def __init__(self, message: str, line: int, token: int | None = None):
        where = f"line {line}" if token is None else f"line {line}, token {token}"
        super().__init__(f"{where}: {message}")
        self.line = line
        self.token = token


class MalformedLine(TraceError):
    pass


class NonMonotoneTime(TraceError):
    pass


class NonNumericToken(TraceError):
    pass


@dataclass(frozen=True, slots=True)
class Waypoint:
    t: float
    x: float
    y: float
    z: float = 0.0


class Trajectory:
    """Position as a function of time, linearly interpolated between waypoints.

    Outside the waypoint span the position is clamped to the first/last point.
    """

    __slots__ = ("waypoints", "ts", "xs", "ys", "zs", "_t", "_pts")

    def __init__(self, waypoints: Sequence[Waypoint]):
        if not waypoints:
            raise ValueError("trajectory needs at least one waypoint")
        for a, b in zip(waypoints, waypoints[1:]):
            if not b.t > a.t:
                raise ValueError(f"waypoint times must strictly increase ({a.t} -> {b.t})")
        self.waypoints = tuple(waypoints)
        self.ts = np.array([w.t for w in waypoints], dtype=float)
        self.xs = np.array([w.x for w in waypoints], dtype=float)
        self.ys = np.array([w.y for w in waypoints], dtype=float)
        self.zs = np.array([w.z for w in waypoints], dtype=float)
        self._t = [w.t for w in waypoints]
        self._pts = [(w.x, w.y, w.z) for w in waypoints]

    def position_at(self, t: float) -> tuple[float, float, float]:
        ts = self._t
        i = bisect.bisect_right(ts, t)
        if i == 0:
            return self._pts[0]
        if i == len(ts):
            return self._pts[-1]
        t0, t1 = ts[i - 1], ts[i]
        p0, p1 = self._pts[i - 1], self._pts[i]
        f = (t - t0) / (t1 - t0)
        return (p0[0] + f * (p1[0] - p0[0]), p0[1] + f * (p1[1] - p0[1]), p0[2] + f * (p1[2] - p0[2]))

    def positions_at(self, times: np.ndarray) -> np.ndarray:
        """Vectorised ``position_at`` over an array of times, shape (len(times), 3)."""
        out = np.empty((len(times), 3))
        out[:, 0] = np.interp(times, self.ts, self.xs)
        out[:, 1] = np.interp(times, self.ts, self.ys)
        out[:, 2] = np.interp(times, self.ts, self.zs)
        return out

    def __len__(self):
        return len(self.waypoints)


class Mobility:
    """Per-node trajectories behind a single ``position_at(node, t)`` query."""

    def __init__(self, trajectories: Sequence[Trajectory]):
        self.trajectories = list(trajectories)

    @classmethod
    def from_waypoints(cls, traces: Iterable[Sequence[Waypoint]]) -> "Mobility":
        return cls([Trajectory(w) for w in traces])

    @classmethod
    def static(cls, positions: Iterable[Sequence[float]]) -> "Mobility":
        return cls([Trajectory([Waypoint(0.0, *p)]) for p in positions])

    def __len__(self):
        return len(self.trajectories)

    def position_at(self, node: int, t: float) -> tuple[float, float, float]:
        if not 0 <= node < len(self.trajectories):
            raise UnknownNode(node)
        return self.trajectories[node].position_at(t)


# --------------------------------------------------------------------------
# BonnMotion format: one node per line, repeating "t x y" or "t x y z" groups


def parse_bonnmotion(text: str, dims: int = 2) -> list[list[Waypoint]]:
    if dims not in (2, 3):
        raise ValueError(f"dims must be 2 or 3, got {dims}")
    group = dims + 1
    traces = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) % group:
            raise MalformedLine(f"{len(tokens)} tokens is not a multiple of {group}", lineno)
        values = []
        for k, tok in enumerate(tokens, start=1):
            try:
                v = float(tok)
            except ValueError:
                raise NonNumericToken(f"not a number: {tok!r}", lineno, k) from None
            if not math.isfinite(v):
                raise NonNumericToken(f"not a finite number: {tok!r}", lineno, k)
            values.append(v)
        wps = []
        for g in range(0, len(values), group):
            t, x, y = values[g : g + 3]
            z = values[g + 3] if dims == 3 else 0.0
            if wps and not t > wps[-1].t:
                raise NonMonotoneTime(f"time {t!r} does not exceed previous {wps[-1].t!r}", lineno, g + 1)
            wps.append(Waypoint(t, x, y, z))
        traces.append(wps)
    return traces


def serialize_bonnmotion(traces: Sequence[Sequence[Waypoint]], dims: int = 2) -> str:
    lines = []
    for wps in traces:
        parts = []
        for w in wps:
            parts += [repr(w.t), repr(w.x), repr(w.y)]
            if dims == 3:
                parts.append(repr(w.z))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Random Waypoint


@dataclass(frozen=True)
class RwpConfig:
    width: float = 5000.0
    height: float = 5000.0
    v_min: float = 0.5
    v_max: float = 1.5
    pause: float = 0.0

    def validate(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise InvalidConfig("area dimensions must be > 0")
        if not 0 < self.v_min <= self.v_max:
            raise InvalidConfig(f"need 0 < v_min <= v_max, got {self.v_min}, {self.v_max}")
        if self.pause < 0:
            raise InvalidConfig("pause must be >= 0")


def rwp_generate(cfg: RwpConfig, node: int, horizon: float, rng: RngStream) -> list[Waypoint]:
    """Classic RWP: uniform destination, uniform speed, fixed pause, until ``horizon``.

    ``node`` only documents ownership; the stream passed in fixes the trajectory.
    """
    cfg.validate()
    g = rng.gen
    x, y = float(g.uniform(0, cfg.width)), float(g.uniform(0, cfg.height))
    t = 0.0
    wps = [Waypoint(t, x, y)]
    while t < horizon:
        nx, ny = float(g.uniform(0, cfg.width)), float(g.uniform(0, cfg.height))
        dist = math.hypot(nx - x, ny - y)
        if dist == 0.0:
            continue
        speed = float(g.uniform(cfg.v_min, cfg.v_max))
        t = t + dist / speed
        x, y = nx, ny
        wps.append(Waypoint(t, x, y))
        # a pause too small to advance the clock is no pause at all
        if t + cfg.pause > t:
            t = t + cfg.pause
            wps.append(Waypoint(t, x, y))
    return wps


# --------------------------------------------------------------------------
# SWIM (simplified): home point + cell weighting by distance decay and popularity


@dataclass(frozen=True)
class SwimConfig:
    width: float = 5000.0
    height: float = 5000.0
    home_radius: float = 1500.0
    alpha: float = 0.7
    cell_size: float = 1000.0
    speed: float = 1.0
    pause_mean: float = 900.0

    def validate(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise InvalidConfig("area dimensions must be > 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidConfig(f"alpha must lie in [0, 1], got {self.alpha}")
        if not (self.cell_size > 0 and self.home_radius > 0 and self.speed > 0 and self.pause_mean > 0):
            raise InvalidConfig("cell_size, home_radius, speed and pause_mean must be > 0")
        if self.n_cols * self.n_rows < 4:
            raise InvalidConfig("cell_size must divide the area into at least 4 cells")

    @property
    def n_cols(self) -> int:
        return math.ceil(self.width / self.cell_size)

    @property
    def n_rows(self) -> int:
        return math.ceil(self.height / self.cell_size)

    def cell_centers(self) -> np.ndarray:
        cs = self.cell_size
        cx = np.minimum((np.arange(self.n_cols) + 0.5) * cs, self.width)
        cy = np.minimum((np.arange(self.n_rows) + 0.5) * cs, self.height)
        # row-major: cell index = row * n_cols + col
        return np.array([(x, y) for y in cy for x in cx])

    def cell_of(self, x: float, y: float) -> int:
        col = min(int(x // self.cell_size), self.n_cols - 1)
        row = min(int(y // self.cell_size), self.n_rows - 1)
        return row * self.n_cols + col


def swim_weights(cfg: SwimConfig, home: tuple[float, float], popularity: np.ndarray) -> np.ndarray:
    """Destination weights per cell: alpha * decay(home, cell) + (1 - alpha) * popularity.

    Decay is ``1 / (1 + d / home_radius)**2``, in (0, 1]. All-zero weights fall
    back to uniform.
    """
    centers = cfg.cell_centers()
    d = np.hypot(centers[:, 0] - home[0], centers[:, 1] - home[1])
    decay = 1.0 / (1.0 + d / cfg.home_radius) ** 2
    w = cfg.alpha * decay + (1.0 - cfg.alpha) * popularity
    total = w.sum()
    if total <= 0:
        return np.full(len(w), 1.0 / len(w))
    return w / total


class _SwimWalker:
    def __init__(self, cfg: SwimConfig, rng: RngStream, popularity: np.ndarray | None = None):
        self.cfg = cfg
        self.g = rng.gen
        self.centers = cfg.cell_centers()
        self.home = (float(self.g.uniform(0, cfg.width)), float(self.g.uniform(0, cfg.height)))
        n_cells = len(self.centers)
        self.seen: list[set[int]] = [set() for _ in range(n_cells)]
        self.popularity = np.zeros(n_cells) if popularity is None else np.asarray(popularity, dtype=float).copy()
        self.wps = [Waypoint(0.0, *self.home)]

    @property
    def t(self) -> float:
        return self.wps[-1].t

    def observe(self, cell: int, nodes: Iterable[int]) -> None:
        s = self.seen[cell]
        before = len(s)
        s.update(nodes)
        self.popularity[cell] += len(s) - before

    def leg(self) -> float:
        """Pick a cell, walk to its centre, pause. Returns the arrival time."""
        cfg = self.cfg
        w = swim_weights(cfg, self.home, self.popularity)
        cell = int(self.g.choice(len(w), p=w))
        cx, cy = float(self.centers[cell, 0]), float(self.centers[cell, 1])
        last = self.wps[-1]
        dist = math.hypot(cx - last.x, cy - last.y)
        arrival = last.t
        if dist > 0:
            arrival = last.t + dist / cfg.speed
            self.wps.append(Waypoint(arrival, cx, cy))
        pause = max(float(self.g.exponential(cfg.pause_mean)), 1e-6)
        self.wps.append(Waypoint(arrival + pause, cx, cy))
        return arrival


def swim_generate(
    cfg: SwimConfig,
    node: int,
    horizon: float,
    rng: RngStream,
    popularity: Sequence[float] | None = None,
) -> list[Waypoint]:
    """Single-node SWIM walk. With no other nodes to observe, popularity stays at
    the optional seeded map (per cell, row-major)."""
    cfg.validate()
    walker = _SwimWalker(cfg, rng, None if popularity is None else np.asarray(popularity, dtype=float))
    while walker.t < horizon:
        walker.leg()
    return walker.wps


def swim_generate_all(cfg: SwimConfig, n_nodes: int, horizon: float, seed: int) -> list[list[Waypoint]]:
    """Joint SWIM generation for ``n_nodes``: each arrival records the distinct
    other nodes currently inside the destination cell into the walker's
    popularity map. Node i draws from stream ("mobility", i)."""
    cfg.validate()
    walkers = [_SwimWalker(cfg, RngStream(seed, "mobility", i)) for i in range(n_nodes)]
    # (time, kind, node): kind 0 = decide next leg, kind 1 = observe at arrival
    heap = [(0.0, 0, i) for i in range(n_nodes)]
    heapq.heapify(heap)
    trajs: list[Trajectory | None] = [None] * n_nodes
    while heap:
        t, kind, i = heapq.heappop(heap)
        w = walkers[i]
        if kind == 0:
            if w.t >= horizon:
                continue
            arrival = w.leg()
            trajs[i] = None
            heapq.heappush(heap, (arrival, 1, i))
            heapq.heappush(heap, (w.t, 0, i))
        else:
            here = w.wps[-1]
            cell = cfg.cell_of(here.x, here.y)
            present = []
            for j, other in enumerate(walkers):
                if j == i:
                    continue
                if trajs[j] is None:
                    trajs[j] = Trajectory(other.wps)
                px, py, _ = trajs[j].position_at(t)
                if cfg.cell_of(px, py) == cell:
                    present.append(j)
            w.observe(cell, present)
    return [w.wps for w in walkers]
