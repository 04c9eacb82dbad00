"""Independent re-derivations used as test oracles. They read the raw CSV
event log with the csv module and share no code with opsim.metrics."""

import csv
import io
import math
import statistics


def raw_rows(log_text):
    lines = [ln for ln in log_text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def node_count(log_text):
    for ln in log_text.splitlines():
        if ln.startswith("# node_count="):
            return int(ln.split("=", 1)[1])
    raise ValueError("no node_count")


def recount(log_text):
    rows = raw_rows(log_text)
    n = node_count(log_text)
    recv = [0] * n
    liked = 0
    total = 0
    oriented = set()
    created = {}
    delivered = set()
    delays = []
    for r in rows:
        if r["kind"] == "generated":
            created[r["item"]] = float(r["t"])
            if r["destination"] != "":
                oriented.add(r["item"])
        elif r["kind"] == "received":
            recv[int(r["node"])] += 1
            total += 1
            liked += r["liked"] == "1"
        elif r["kind"] == "delivered":
            delivered.add((r["item"], r["node"]))
            delays.append(float(r["t"]) - float(r["created_at"]))
    mean = statistics.fmean(recv) if n else 0.0
    cov = statistics.pstdev(recv) / mean if mean else 0.0
    return {
        "cov": cov,
        "liked_ratio": liked / total if total else None,
        "nonliked_ratio": (total - liked) / total if total else None,
        "delivery_ratio": len({d for d in delivered if d[0] in oriented}) / len(oriented) if oriented else None,
        "avg_delivery_time": statistics.fmean(delays) if delays else None,
    }


def close(a, b, rel=1e-9):
    if a is None or b is None:
        return a is None and b is None
    return math.isclose(a, b, rel_tol=rel, abs_tol=1e-12)


def contacts_from_snapshots(positions_at, n, range_, ticks_of, t_end):
    """Contacts as seen by the lower-id node sampling raw positions at its ticks."""
    out = []
    for i in range(n):
        open_at = {}
        for t in ticks_of(i):
            pi = positions_at(i, t)
            for j in range(i + 1, n):
                near = math.dist(pi, positions_at(j, t)) <= range_
                if near and j not in open_at:
                    open_at[j] = t
                elif not near and j in open_at:
                    out.append((i, j, t - open_at.pop(j)))
        out += [(i, j, t_end - s) for j, s in open_at.items()]
    return out


def udg_brute_force(pos, r):
    n = len(pos)
    out = [set() for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if math.dist(pos[i], pos[j]) <= r:
                out[i].add(j)
                out[j].add(i)
    return out


# -- random rumour spreading on a static graph --------------------------------------

def rrs_absorption_law(adj, origin, phases, interval, n_items=1, max_ticks=200):
    """Distribution of the time from the origin's first tick until every node
    holds the item, as {delay: probability}.

    Markov chain over holding sets (bitmasks over the 2**n states). Ticks of
    all nodes are visited in time order starting at the origin's first tick;
    a ticking holder broadcasts the tracked item with probability
    1 / n_items and every neighbour joins the holding set. Broadcasts finish
    well before the next tick, so arrivals never interleave with ticks.
    """
    n = len(adj)
    full = (1 << n) - 1
    masks = [sum(1 << j for j in adj[i]) for i in range(n)]
    order = sorted(range(n), key=lambda i: ((phases[i] - phases[origin]) % interval, i))
    offsets = [(phases[i] - phases[origin]) % interval for i in order]
    dist = {1 << origin: 1.0}
    law = {}
    p = 1.0 / n_items
    for rnd in range(max_ticks):
        for i, off in zip(order, offsets):
            nxt = {}
            for state, pr in dist.items():
                if state >> i & 1:
                    grown = state | masks[i]
                    nxt[grown] = nxt.get(grown, 0.0) + pr * p
                    if p < 1.0:
                        nxt[state] = nxt.get(state, 0.0) + pr * (1.0 - p)
                else:
                    nxt[state] = nxt.get(state, 0.0) + pr
            done = nxt.pop(full, 0.0)
            if done:
                t = rnd * interval + off
                law[t] = law.get(t, 0.0) + done
            dist = nxt
            if not dist:
                return law
    raise RuntimeError("chain did not absorb")


def rrs_dissemination_cdf(adj, phases, interval, service):
    """CDF of creation-to-full-dissemination time when the item appears at a
    uniformly random node at a time uniform modulo ``interval``: the wait to
    the origin's first tick is U(0, interval], then the chain, then one
    service time for the final broadcast."""
    n = len(adj)
    laws = [rrs_absorption_law(adj, o, phases, interval) for o in range(n)]

    def cdf(d):
        total = 0.0
        for law in laws:
            for a, pr in law.items():
                w = d - a - service
                total += pr * min(max(w / interval, 0.0), 1.0)
        return total / n

    return cdf
