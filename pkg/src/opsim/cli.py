"""Command-line entry point: run, sweep, metrics, validate-trace, gen-mobility."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from opsim.metrics import LogFormatError, compute_report, read_log
from opsim.mobility import TraceError, parse_bonnmotion, serialize_bonnmotion
from opsim.scenario import (
    ConfigError,
    RunError,
    build_mobility,
    output_dir,
    parse_scenario,
    report_json,
    run_scenario,
    sweep,
)


def _load(path: str):
    p = Path(path)
    return parse_scenario(p.read_text(encoding="utf-8"), base_dir=p.parent)


def _axis(text: str) -> tuple[str, list[str]]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"axis must look like key=v1,v2,... (got {text!r})")
    key, values = text.split("=", 1)
    vals = [v.strip() for v in values.split(",") if v.strip()]
    if not vals:
        raise argparse.ArgumentTypeError(f"axis {key!r} has no values")
    return key.strip(), vals


def cmd_run(args) -> int:
    s = _load(args.config)
    for d in s.defaults_applied:
        print(f"default {d}")
    log_path, report_path = run_scenario(s, args.out)
    print(f"log: {log_path}")
    print(f"report: {report_path}")
    return 0


def cmd_sweep(args) -> int:
    s = _load(args.config)
    rows = sweep(s, args.axis, args.out, jobs=args.jobs)
    failed = [r for r in rows if r["status"] != "ok"]
    print(f"{len(rows)} cells, {len(failed)} failed; summary in {output_dir(s, args.out) / 'summary.csv'}")
    for r in failed:
        print(f"failed: {r['error']}", file=sys.stderr)
    return 1 if failed else 0


def cmd_metrics(args) -> int:
    ledger = read_log(Path(args.log).read_text(encoding="utf-8"))
    text = report_json(compute_report(ledger))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_validate_trace(args) -> int:
    traces = parse_bonnmotion(Path(args.file).read_text(encoding="utf-8"), args.dims)
    n_wp = sum(len(t) for t in traces)
    if traces:
        t0 = min(t[0].t for t in traces)
        t1 = max(t[-1].t for t in traces)
        print(f"ok: {len(traces)} nodes, {n_wp} waypoints, time span [{t0}, {t1}]")
    else:
        print("ok: 0 nodes")
    return 0


def cmd_gen_mobility(args) -> int:
    s = _load(args.config)
    if s.mobility.kind == "trace":
        print("mobility = trace already reads a movement file; nothing to generate", file=sys.stderr)
        return 1
    mob = build_mobility(s)
    out = Path(args.out) if args.out else output_dir(s) / f"{s.mobility.kind}.movements"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(serialize_bonnmotion([t.waypoints for t in mob.trajectories]), encoding="utf-8")
    print(f"wrote {len(mob)} node traces to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="opsim", description="Opportunistic network simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides config and $OPSIM_OUTPUT_DIR)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run the Cartesian product of axis values")
    s.add_argument("config")
    s.add_argument("--axis", type=_axis, action="append", required=True, help="key=v1,v2,... (repeatable)")
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("metrics", help="recompute a report from an event log")
    m.add_argument("log")
    m.add_argument("--out")
    m.set_defaults(func=cmd_metrics)

    v = sub.add_parser("validate-trace", help="check a BonnMotion movement file")
    v.add_argument("file")
    v.add_argument("--dims", type=int, choices=(2, 3), default=2)
    v.set_defaults(func=cmd_validate_trace)

    g = sub.add_parser("gen-mobility", help="export the scenario's synthetic mobility as BonnMotion")
    g.add_argument("config")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_mobility)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TraceError, LogFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
