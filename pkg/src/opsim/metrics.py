"""Run ledger, event-log (de)serialisation, and the seven OppNets metrics.

Every metric is a pure function of the ledger records, so a report recomputed
from a written event log equals the report produced at the end of the run.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, NamedTuple

SCHEMA_VERSION = 1

KINDS = (
    "generated",
    "sent",
    "received",
    "delivered",
    "contact_open",
    "contact_close",
    "dropped",
    "evicted",
)

COLUMNS = ("seq", "t", "kind", "node", "peer", "item", "size", "destination", "created_at", "liked", "reason")


class Record(NamedTuple):
    t: float
    kind: str
    node: int
    peer: int | None = None
    item: str | None = None
    size: int | None = None
    destination: int | None = None
    created_at: float | None = None
    liked: bool | None = None
    reason: str | None = None


class Ledger:
    """Append-only record list for one run, in dispatch order."""

    def __init__(self, node_count: int, t_end: float | None = None, log_sends: bool = True):
        self.node_count = node_count
        self.t_end = t_end
        self.log_sends = log_sends
        self.records: list[Record] = []
        self._open: dict[tuple[int, int], float] = {}

    def add(self, rec: Record) -> None:
        self.records.append(rec)

    # convenience writers --------------------------------------------------
    def generated(self, t, node, item, size, destination):
        self.records.append(Record(t, "generated", node, None, item, size, destination, t))

    def sent(self, t, node, peer, item, size):
        if self.log_sends:
            self.records.append(Record(t, "sent", node, peer, item, size))

    def received(self, t, node, peer, item, liked):
        self.records.append(Record(t, "received", node, peer, item, liked=bool(liked)))

    def delivered(self, t, node, item, created_at):
        self.records.append(Record(t, "delivered", node, None, item, created_at=created_at))

    def dropped(self, t, node, reason, peer=None, item=None, size=None):
        self.records.append(Record(t, "dropped", node, peer, item, size, reason=reason))

    def evicted(self, t, node, item):
        self.records.append(Record(t, "evicted", node, None, item))

    def contact_open(self, t, a, b):
        a, b = min(a, b), max(a, b)
        if (a, b) in self._open:
            return
        self._open[(a, b)] = t
        self.records.append(Record(t, "contact_open", a, b))

    def contact_close(self, t, a, b):
        a, b = min(a, b), max(a, b)
        start = self._open.pop((a, b), None)
        if start is None:
            return
        self.records.append(Record(t, "contact_close", a, b))

    def open_contacts(self) -> list[tuple[int, int]]:
        return sorted(self._open)

    def finalize(self, t_end: float) -> None:
        self.t_end = t_end
        for a, b in self.open_contacts():
            self.contact_close(t_end, a, b)


# --------------------------------------------------------------------------
# Event log CSV


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_log(ledger: Ledger, fh, header: Iterable[str] = (), partial: bool = False) -> None:
    fh.write(f"# schema={SCHEMA_VERSION}\n")
    fh.write(f"# node_count={ledger.node_count}\n")
    fh.write(f"# t_end={ledger.t_end!r}\n")
    for line in header:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(COLUMNS)
    for seq, r in enumerate(ledger.records):
        w.writerow([seq, *(_fmt(v) for v in r)])
    if partial:
        fh.write("# partial\n")


def dumps_log(ledger: Ledger, header: Iterable[str] = ()) -> str:
    buf = io.StringIO()
    write_log(ledger, buf, header)
    return buf.getvalue()


class LogFormatError(ValueError):
    pass


def read_log(text: str) -> Ledger:
    meta = {}
    body = []
    partial = False
    for line in text.splitlines():
        if line.startswith("#"):
            entry = line[1:].strip()
            if entry == "partial":
                partial = True
            elif "=" in entry and not entry.startswith("default "):
                k, v = entry.split("=", 1)
                meta.setdefault(k.strip(), v.strip())
        elif line:
            body.append(line)
    if meta.get("schema") != str(SCHEMA_VERSION):
        raise LogFormatError(f"unsupported or missing schema marker: {meta.get('schema')!r}")
    if partial:
        raise LogFormatError("log is marked partial (run aborted)")
    ledger = Ledger(int(meta["node_count"]), None if meta.get("t_end") in (None, "None") else float(meta["t_end"]))
    rows = csv.reader(body)
    head = next(rows, None)
    if tuple(head or ()) != COLUMNS:
        raise LogFormatError(f"unexpected header row {head!r}")
    for row in rows:
        _, t, kind, node, peer, item, size, dest, created, liked, reason = row
        if kind not in KINDS:
            raise LogFormatError(f"unknown record kind {kind!r}")
        ledger.records.append(
            Record(
                float(t),
                kind,
                int(node),
                int(peer) if peer else None,
                item or None,
                int(size) if size else None,
                int(dest) if dest else None,
                float(created) if created else None,
                (liked == "1") if liked else None,
                reason or None,
            )
        )
    return ledger


# --------------------------------------------------------------------------
# Metrics


@dataclass
class MetricsReport:
    liked_ratio: float | None
    nonliked_ratio: float | None
    per_node: dict[int, dict] = field(default_factory=dict)
    cov: float = 0.0
    delivery_ratio: float | None = None
    avg_delivery_time: float | None = None
    avg_contact_time: float | None = None
    contact_count: int = 0
    per_pair_contact_time: float | None = None
    reach: float | None = None
    generated: int = 0
    delivered: int = 0
    receipts: int = 0
    delay_cdf: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_node"] = {str(k): v for k, v in self.per_node.items()}
        d["delay_cdf"] = [list(p) for p in self.delay_cdf]
        return d


def liked_ratios(ledger: Ledger) -> tuple[dict[int, tuple[float, float] | None], tuple[float, float] | None]:
    """Per-node and network (liked, non-liked) shares of received items.

    Nodes without receipts map to None.
    """
    liked = Counter()
    total = Counter()
    for r in ledger.records:
        if r.kind == "received":
            total[r.node] += 1
            if r.liked:
                liked[r.node] += 1
    per_node = {}
    for n in range(ledger.node_count):
        if total[n]:
            f = liked[n] / total[n]
            per_node[n] = (f, 1.0 - f)
        else:
            per_node[n] = None
    all_recv = sum(total.values())
    if not all_recv:
        return per_node, None
    f = sum(liked.values()) / all_recv
    return per_node, (f, 1.0 - f)


def coefficient_of_variation(counts) -> float:
    counts = list(counts)
    if not counts:
        return 0.0
    mean = sum(counts) / len(counts)
    if mean == 0:
        return 0.0
    var = sum((c - mean) ** 2 for c in counts) / len(counts)
    return math.sqrt(var) / mean


def traffic_spread_cov(ledger: Ledger, basis: str = "received") -> float:
    """CoV of per-node counts. ``basis`` is "received" (default) or "sent"."""
    if basis not in ("received", "sent"):
        raise ValueError(f"basis must be 'received' or 'sent', got {basis!r}")
    counts = Counter(r.node for r in ledger.records if r.kind == basis)
    return coefficient_of_variation(counts[n] for n in range(ledger.node_count))


def delivery_ratio(ledger: Ledger) -> float | None:
    oriented = {r.item for r in ledger.records if r.kind == "generated" and r.destination is not None}
    if not oriented:
        return None
    delivered = {(r.item, r.node) for r in ledger.records if r.kind == "delivered" and r.item in oriented}
    return len(delivered) / len(oriented)


def delivery_delays(ledger: Ledger) -> list[float]:
    return [r.t - r.created_at for r in ledger.records if r.kind == "delivered"]


def empirical_cdf(values) -> list[tuple[float, float]]:
    """One (value, cumulative fraction) point per distinct value."""
    values = sorted(values)
    n = len(values)
    out = []
    for i, v in enumerate(values):
        if i + 1 < n and values[i + 1] == v:
            continue
        out.append((v, (i + 1) / n))
    return out


def avg_delivery_time(ledger: Ledger) -> float | None:
    delays = delivery_delays(ledger)
    return math.fsum(delays) / len(delays) if delays else None


def contact_durations(ledger: Ledger) -> list[tuple[tuple[int, int], float]]:
    open_at = {}
    out = []
    for r in ledger.records:
        if r.kind == "contact_open":
            open_at[(r.node, r.peer)] = r.t
        elif r.kind == "contact_close":
            start = open_at.pop((r.node, r.peer))
            out.append(((r.node, r.peer), r.t - start))
    if open_at and ledger.t_end is not None:
        for pair, start in sorted(open_at.items()):
            out.append((pair, ledger.t_end - start))
    return out


def contact_stats(ledger: Ledger) -> tuple[float | None, int]:
    durs = [d for _, d in contact_durations(ledger)]
    if not durs:
        return None, 0
    return math.fsum(durs) / len(durs), len(durs)


def per_pair_contact_time(ledger: Ledger) -> float | None:
    """Mean over pairs of each pair's mean contact duration."""
    by_pair = defaultdict(list)
    for pair, d in contact_durations(ledger):
        by_pair[pair].append(d)
    if not by_pair:
        return None
    return math.fsum(math.fsum(v) / len(v) for v in by_pair.values()) / len(by_pair)


def destinationless_reach(ledger: Ledger) -> float | None:
    """Mean fraction of nodes that ever held each destination-less item."""
    holders = {}
    for r in ledger.records:
        if r.kind == "generated" and r.destination is None:
            holders[r.item] = {r.node}
        elif r.kind == "received" and r.item in holders:
            holders[r.item].add(r.node)
    if not holders or not ledger.node_count:
        return None
    return math.fsum(len(h) / ledger.node_count for h in holders.values()) / len(holders)


def compute_report(ledger: Ledger) -> MetricsReport:
    per_node_ratio, network = liked_ratios(ledger)
    recv = Counter(r.node for r in ledger.records if r.kind == "received")
    per_node = {}
    for n in range(ledger.node_count):
        pr = per_node_ratio[n]
        per_node[n] = {
            "receipts": recv[n],
            "liked_ratio": None if pr is None else pr[0],
            "nonliked_ratio": None if pr is None else pr[1],
        }
    avg_ct, n_ct = contact_stats(ledger)
    delays = delivery_delays(ledger)
    return MetricsReport(
        liked_ratio=None if network is None else network[0],
        nonliked_ratio=None if network is None else network[1],
        per_node=per_node,
        cov=traffic_spread_cov(ledger),
        delivery_ratio=delivery_ratio(ledger),
        avg_delivery_time=avg_delivery_time(ledger),
        avg_contact_time=avg_ct,
        contact_count=n_ct,
        per_pair_contact_time=per_pair_contact_time(ledger),
        reach=destinationless_reach(ledger),
        generated=sum(1 for r in ledger.records if r.kind == "generated"),
        delivered=len(delays),
        receipts=sum(recv.values()),
        delay_cdf=empirical_cdf(delays),
    )


def truncated(ledger: Ledger, horizon: float) -> Ledger:
    """Ledger prefix with records at t <= horizon; open contacts close at horizon."""
    out = Ledger(ledger.node_count, horizon, ledger.log_sends)
    out.records = [r for r in ledger.records if r.t <= horizon]
    return out


def format_cdf(cdf) -> str:
    lines = ["# delay_seconds cumulative_fraction"]
    lines += [f"{d!r} {f!r}" for d, f in cdf]
    return "\n".join(lines) + "\n"
