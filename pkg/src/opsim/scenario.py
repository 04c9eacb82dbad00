"""Scenario configuration (flat ``key = value`` text), run orchestration,
output files, and parameter sweeps."""

from __future__ import annotations

import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from opsim.application import APPS, TRAFFIC_KINDS, AppConfig, TrafficModel
from opsim.engine import RngStream
from opsim.link import LinkConfig
from opsim.metrics import compute_report, format_cdf, write_log
from opsim.mobility import (
    Mobility,
    RwpConfig,
    SwimConfig,
    parse_bonnmotion,
    rwp_generate,
    swim_generate_all,
)
from opsim.simulation import PROTOCOLS, ForwardingConfig, Network

OUTPUT_ENV = "OPSIM_OUTPUT_DIR"
SWEEP_AXES = ("traffic.kind", "cache.capacity", "mobility", "seed")


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


class UnknownKey(ConfigError):
    pass


class MissingRequiredKey(ConfigError):
    pass


class InvalidValue(ConfigError):
    pass


class RunError(RuntimeError):
    pass


@dataclass(frozen=True)
class MobilitySpec:
    kind: str = "rwp"
    width: float = 5000.0
    height: float = 5000.0
    rwp: RwpConfig = field(default_factory=RwpConfig)
    swim: SwimConfig = field(default_factory=SwimConfig)
    trace_path: str | None = None
    trace_dims: int = 2


@dataclass(frozen=True)
class Scenario:
    seed: int
    node_count: int
    t_end: float
    link: LinkConfig = field(default_factory=LinkConfig)
    mobility: MobilitySpec = field(default_factory=MobilitySpec)
    forwarding: ForwardingConfig = field(default_factory=ForwardingConfig)
    app: AppConfig = field(default_factory=AppConfig)
    outputs: str = "out"
    defaults_applied: tuple[str, ...] = field(default=(), compare=False)


def _str(v: str) -> str:
    return v


# key -> (parser, default); default None marks an optional key with no value,
# REQUIRED marks a required key
REQUIRED = object()
KEYS: dict[str, tuple[Callable[[str], Any], Any]] = {
    "seed": (int, REQUIRED),
    "node_count": (int, REQUIRED),
    "t_end": (float, REQUIRED),
    "outputs": (_str, "out"),
    "link.range": (float, 30.0),
    "link.bandwidth": (float, 125000.0),
    "link.fixed_delay": (float, 0.005),
    "link.beacon_interval": (float, 1.0),
    "link.queue_capacity": (int, 100),
    "mobility": (_str, REQUIRED),
    "mobility.width": (float, 5000.0),
    "mobility.height": (float, 5000.0),
    "rwp.v_min": (float, 0.5),
    "rwp.v_max": (float, 1.5),
    "rwp.pause": (float, 0.0),
    "swim.home_radius": (float, 1500.0),
    "swim.alpha": (float, 0.7),
    "swim.cell_size": (float, 1000.0),
    "swim.speed": (float, 1.0),
    "swim.pause_mean": (float, 900.0),
    "trace.path": (_str, None),
    "trace.dims": (int, 2),
    "forwarding": (_str, REQUIRED),
    "cache.capacity": (int, 500000),
    "rrs.interval": (float, None),
    "odd.threshold": (float, 0.5),
    "odd.top_k": (int, 3),
    "app": (_str, REQUIRED),
    "traffic.kind": (_str, None),
    "traffic.mean_interval": (float, 7200.0),
    "traffic.lo": (float, None),
    "traffic.hi": (float, None),
    "app.destination_mode": (_str, "oriented"),
    "app.catalog_size": (int, None),
    "app.liked_probability": (float, 0.25),
    "app.item_size": (int, 10000),
    "app.generation": (_str, "per_node"),
}


def _read_pairs(text: str) -> tuple[dict[str, str], dict[str, int]]:
    values: dict[str, str] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if "=" not in line:
            raise InvalidValue("expected 'key = value'", None, lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise UnknownKey("unknown key", key, lineno)
        if key in values:
            raise InvalidValue("duplicate key", key, lineno)
        values[key] = value
        lines[key] = lineno
    return values, lines


def parse_scenario(text: str, base_dir: str | os.PathLike | None = None) -> Scenario:
    """Parse and validate configuration text; relative trace paths resolve
    against ``base_dir``."""
    raw, lines = _read_pairs(text)
    v: dict[str, Any] = {}
    applied = []
    for key, (conv, default) in KEYS.items():
        if key in raw:
            try:
                v[key] = conv(raw[key])
            except ValueError as exc:
                raise InvalidValue(str(exc), key, lines[key]) from None
        elif default is REQUIRED:
            raise MissingRequiredKey("required key not set", key)
        else:
            v[key] = default
            if default is not None:
                applied.append(f"{key}={default!r}" if not isinstance(default, str) else f"{key}={default}")

    def bad(key, msg):
        return InvalidValue(msg, key, lines.get(key))

    def choice(key, options):
        if v[key] not in options:
            raise bad(key, f"must be one of {', '.join(options)}, got {v[key]!r}")

    if v["node_count"] < 1:
        raise bad("node_count", "must be >= 1")
    if not v["t_end"] > 0:
        raise bad("t_end", "must be > 0")
    choice("mobility", ("rwp", "swim", "trace"))
    choice("forwarding", PROTOCOLS)
    choice("app", APPS)

    link = LinkConfig(
        v["link.range"], v["link.bandwidth"], v["link.fixed_delay"], v["link.beacon_interval"], v["link.queue_capacity"]
    )
    try:
        link.validate()
    except ValueError as exc:
        # messages start with the offending key, e.g. "link.range must be > 0"
        raise bad(str(exc).split(" ")[0], str(exc)) from None

    w, h = v["mobility.width"], v["mobility.height"]
    rwp = RwpConfig(w, h, v["rwp.v_min"], v["rwp.v_max"], v["rwp.pause"])
    swim = SwimConfig(w, h, v["swim.home_radius"], v["swim.alpha"], v["swim.cell_size"], v["swim.speed"], v["swim.pause_mean"])
    kind = v["mobility"]
    trace_path = v["trace.path"]
    if v["trace.dims"] not in (2, 3):
        raise bad("trace.dims", "must be 2 or 3")
    try:
        if kind == "rwp":
            rwp.validate()
        elif kind == "swim":
            swim.validate()
    except ValueError as exc:
        raise bad("mobility", str(exc)) from None
    if kind == "trace":
        if trace_path is None:
            raise MissingRequiredKey("required when mobility = trace", "trace.path")
        path = Path(trace_path)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        try:
            n_lines = sum(1 for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip())
        except OSError as exc:
            raise bad("trace.path", f"cannot read trace: {exc}") from None
        if n_lines < v["node_count"]:
            raise bad("trace.path", f"trace has {n_lines} node lines, node_count is {v['node_count']}")
        trace_path = str(path)
    mobility = MobilitySpec(kind, w, h, rwp, swim, trace_path, v["trace.dims"])

    fwd = ForwardingConfig(v["forwarding"], v["cache.capacity"], v["rrs.interval"], v["odd.threshold"], v["odd.top_k"])
    try:
        fwd.validate()
    except ValueError as exc:
        raise bad("forwarding", str(exc)) from None

    tkind = v["traffic.kind"]
    if tkind is None:
        tkind = "uniform" if v["app"] == "bruit" else "exponential"
        applied.append(f"traffic.kind={tkind}")
    if tkind not in TRAFFIC_KINDS:
        raise bad("traffic.kind", f"must be one of {', '.join(TRAFFIC_KINDS)}, got {tkind!r}")
    traffic = TrafficModel(tkind, v["traffic.mean_interval"], v["traffic.lo"], v["traffic.hi"])
    if v["app"] == "herald" and v["app.catalog_size"] is None:
        raise MissingRequiredKey("required when app = herald", "app.catalog_size")
    app = AppConfig(
        v["app"],
        traffic,
        v["app.destination_mode"],
        v["app.catalog_size"],
        v["app.liked_probability"],
        v["app.item_size"],
        v["app.generation"],
    )
    try:
        app.validate()
    except ValueError as exc:
        msg = str(exc)
        key = "traffic.kind" if "bruit" in msg else "app.catalog_size" if "catalog" in msg else "app"
        raise bad(key, msg) from None
    if v["forwarding"] == "epidemic" and app.destination_mode == "destination_less":
        raise bad("app.destination_mode", "epidemic routing is unicast and needs destination-oriented data")
    if app.destination_mode == "oriented" and v["node_count"] < 2:
        raise bad("app.destination_mode", "oriented data needs at least two nodes")

    return Scenario(
        v["seed"], v["node_count"], v["t_end"], link, mobility, fwd, app, v["outputs"], tuple(applied)
    )


def scenario_values(s: Scenario) -> dict[str, Any]:
    m, f, a = s.mobility, s.forwarding, s.app
    return {
        "seed": s.seed,
        "node_count": s.node_count,
        "t_end": s.t_end,
        "outputs": s.outputs,
        "link.range": s.link.range,
        "link.bandwidth": s.link.bandwidth,
        "link.fixed_delay": s.link.fixed_delay,
        "link.beacon_interval": s.link.beacon_interval,
        "link.queue_capacity": s.link.queue_capacity,
        "mobility": m.kind,
        "mobility.width": m.width,
        "mobility.height": m.height,
        "rwp.v_min": m.rwp.v_min,
        "rwp.v_max": m.rwp.v_max,
        "rwp.pause": m.rwp.pause,
        "swim.home_radius": m.swim.home_radius,
        "swim.alpha": m.swim.alpha,
        "swim.cell_size": m.swim.cell_size,
        "swim.speed": m.swim.speed,
        "swim.pause_mean": m.swim.pause_mean,
        "trace.path": m.trace_path,
        "trace.dims": m.trace_dims,
        "forwarding": f.protocol,
        "cache.capacity": f.cache_capacity,
        "rrs.interval": f.rrs_interval,
        "odd.threshold": f.odd_threshold,
        "odd.top_k": f.odd_top_k,
        "app": a.app,
        "traffic.kind": a.traffic.kind,
        "traffic.mean_interval": a.traffic.mean_interval,
        "traffic.lo": a.traffic.lo,
        "traffic.hi": a.traffic.hi,
        "app.destination_mode": a.destination_mode,
        "app.catalog_size": a.catalog_size,
        "app.liked_probability": a.liked_probability,
        "app.item_size": a.item_size,
        "app.generation": a.generation,
    }


def serialize_scenario(s: Scenario) -> str:
    out = []
    for key, value in scenario_values(s).items():
        if value is None:
            continue
        out.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    return "\n".join(out) + "\n"


def with_overrides(s: Scenario, overrides: dict[str, str]) -> Scenario:
    """Re-validate ``s`` with some keys replaced by raw string values."""
    values = {k: v for k, v in scenario_values(s).items() if v is not None}
    for k in overrides:
        if k not in KEYS:
            raise UnknownKey("unknown key", k)
    values.update(overrides)
    text = "\n".join(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in values.items())
    return parse_scenario(text)


# --------------------------------------------------------------------------
# Running


def build_mobility(s: Scenario) -> Mobility:
    m = s.mobility
    if m.kind == "rwp":
        return Mobility.from_waypoints(
            rwp_generate(m.rwp, i, s.t_end, RngStream(s.seed, "mobility", i)) for i in range(s.node_count)
        )
    if m.kind == "swim":
        return Mobility.from_waypoints(swim_generate_all(m.swim, s.node_count, s.t_end, s.seed))
    text = Path(m.trace_path).read_text(encoding="utf-8")
    traces = parse_bonnmotion(text, m.trace_dims)
    if len(traces) < s.node_count:
        raise InvalidValue(f"trace has {len(traces)} node lines, node_count is {s.node_count}", "trace.path")
    return Mobility.from_waypoints(traces[: s.node_count])


def build_network(s: Scenario, log_sends: bool = True) -> Network:
    return Network.build(
        s.node_count,
        build_mobility(s),
        s.t_end,
        seed=s.seed,
        link=s.link,
        forwarding=s.forwarding,
        app=s.app,
        log_sends=log_sends,
    )


def output_dir(s: Scenario, override: str | os.PathLike | None = None) -> Path:
    if override is not None:
        return Path(override)
    env = os.environ.get(OUTPUT_ENV)
    return Path(env) if env else Path(s.outputs)


def run_header(s: Scenario) -> list[str]:
    return [f"default {d}" for d in s.defaults_applied]


def report_json(report) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def run_scenario(s: Scenario, out: str | os.PathLike | None = None) -> tuple[Path, Path]:
    """Run ``s``; write events.csv, report.json and delay_cdf.txt under the
    output directory. Returns (log path, report path)."""
    out_dir = output_dir(s, out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "events.csv"
    report_path = out_dir / "report.json"
    net = None
    try:
        net = build_network(s)
        ledger = net.run()
    except Exception as exc:
        with open(log_path, "w", encoding="utf-8", newline="") as fh:
            if net is not None:
                write_log(net.ledger, fh, run_header(s), partial=True)
            else:
                fh.write("# partial\n")
        raise RunError(f"run aborted: {exc}") from exc
    report = compute_report(ledger)
    with open(log_path, "w", encoding="utf-8", newline="") as fh:
        write_log(ledger, fh, run_header(s))
    report_path.write_text(report_json(report), encoding="utf-8")
    (out_dir / "delay_cdf.txt").write_text(format_cdf(report.delay_cdf), encoding="utf-8")
    return log_path, report_path


# --------------------------------------------------------------------------
# Sweeps


def cell_name(cell: dict[str, str]) -> str:
    return "__".join(f"{k}={v}" for k, v in cell.items()) or "base"


def _run_cell(args):
    s, cell, out_dir = args
    try:
        log_path, report_path = run_scenario(s, out_dir)
        return cell, json.loads(report_path.read_text(encoding="utf-8")), None
    except Exception as exc:
        return cell, None, f"{type(exc).__name__}: {exc}"


SUMMARY_COLUMNS = (
    "delivery_ratio",
    "avg_delivery_time",
    "contact_count",
    "avg_contact_time",
    "cov",
    "liked_ratio",
    "generated",
    "delivered",
)


def sweep(
    base: Scenario,
    axes: list[tuple[str, list[str]]],
    out: str | os.PathLike | None = None,
    jobs: int = 1,
) -> list[dict]:
    """One run per combination of axis values. Failed cells are reported in
    the summary and do not stop the sweep."""
    for key, _ in axes:
        if key not in SWEEP_AXES:
            raise InvalidValue(f"sweep axes are limited to {', '.join(SWEEP_AXES)}", key)
    root = output_dir(base, out)
    root.mkdir(parents=True, exist_ok=True)
    tasks = []
    results = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        cell = dict(zip((k for k, _ in axes), combo))
        try:
            s = with_overrides(base, cell)
        except ConfigError as exc:
            results.append((cell, None, f"{type(exc).__name__}: {exc}"))
            continue
        tasks.append((s, cell, root / cell_name(cell)))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results += list(pool.map(_run_cell, tasks))
    else:
        results += [_run_cell(t) for t in tasks]

    rows = []
    for cell, report, error in results:
        row = dict(cell)
        row["status"] = "ok" if error is None else "failed"
        row["error"] = error or ""
        for c in SUMMARY_COLUMNS:
            row[c] = "" if report is None or report.get(c) is None else report[c]
        rows.append(row)
        if report is not None:
            cdf = [tuple(p) for p in report["delay_cdf"]]
            (root / f"cdf_{cell_name(cell)}.txt").write_text(format_cdf(cdf), encoding="utf-8")
    header = [k for k, _ in axes] + ["status"] + list(SUMMARY_COLUMNS) + ["error"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_csv_cell(row.get(h, "")) for h in header))
    (root / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if any(k == "mobility" for k, _ in axes):
        (root / "mobility_table.txt").write_text(mobility_table(rows), encoding="utf-8")
    return rows


def _csv_cell(v) -> str:
    s = repr(v) if isinstance(v, float) else str(v)
    return f'"{s}"' if ("," in s or '"' in s) else s


def mobility_table(rows: list[dict]) -> str:
    """Per-model delivery rate, delivery delay, contact totals and durations,
    averaged over the other axes."""
    models = []
    for r in rows:
        if r["mobility"] not in models:
            models.append(r["mobility"])

    def mean(model, col):
        vals = [float(r[col]) for r in rows if r["mobility"] == model and r["status"] == "ok" and r[col] != ""]
        return sum(vals) / len(vals) if vals else None

    def fmt(x, f):
        return "n/a" if x is None else f(x)

    metrics = [
        ("Average Delivery Rate", "delivery_ratio", lambda x: f"{100 * x:.1f} %"),
        ("Average Delivery Delay", "avg_delivery_time", lambda x: f"{x / 3600:.2f} h"),
        ("Total Number of Contacts", "contact_count", lambda x: f"{x:,.0f}"),
        ("Average Contact Duration", "avg_contact_time", lambda x: f"{x:.2f} sec"),
    ]
    width = max(len(m[0]) for m in metrics) + 2
    lines = ["Model".ljust(width) + "".join(m.upper().rjust(16) for m in models)]
    for label, col, f in metrics:
        lines.append(label.ljust(width) + "".join(fmt(mean(m, col), f).rjust(16) for m in models))
    return "\n".join(lines) + "\n"
