"""Command-line entry point.

    gridtwin validate <cfg>
    gridtwin run <cfg> [--until HH:MM[:SS]] [--out DIR] [--realtime]
    gridtwin report <dirA> <dirB>

Exit codes: 0 ok, 1 config error, 2 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cosim import SchedulerError
from .scenario import ConfigError, ScenarioConfig, build, parse_time, validate

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _load(path: str) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return ScenarioConfig.load(p)


def cmd_validate(args) -> int:
    try:
        cfg = _load(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    issues = validate(cfg)
    for issue in issues:
        print(f"error: {issue}")
    if issues:
        print(f"{len(issues)} problem(s) found")
        return EXIT_CONFIG
    print(f"{cfg.name}: ok")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = _load(args.config)
        sim = build(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    until = None
    if args.until:
        try:
            until = parse_time(args.until)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    outdir = Path(args.out) if args.out else Path(f"dataset-{cfg.name}")
    try:
        summary = sim.run(until_s=until, realtime=args.realtime)
    except SchedulerError as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        sim.export(outdir)  # flush partial outputs
        return EXIT_RUNTIME
    sim.export(outdir)
    print(f"{cfg.name}: {summary.steps} steps in {summary.wall_s:.2f}s "
          f"-> {outdir}")
    return EXIT_OK


def _read_dataset(path: Path) -> dict:
    summary_file = path / "summary.json"
    process_file = path / "process.csv"
    if not summary_file.is_file() or not process_file.is_file():
        raise ConfigError(f"{path} is not a complete dataset directory")
    data = json.loads(summary_file.read_text())
    rows = process_file.read_text().splitlines()[1:]
    samples = []
    for row in rows:
        parts = row.split(",")
        h, m, s = parts[0].split(":")
        t = int(h) * 3600 + int(m) * 60 + float(s)
        samples.append((t, float(parts[4])))  # (t_s, transformer_kw)
    edges = set()
    flows_file = path / "flows.csv"
    if flows_file.is_file():
        for row in flows_file.read_text().splitlines()[1:]:
            edges.add(tuple(row.split(",")[:4]))
    return {"summary": data, "samples": samples, "edges": edges}


def _window_integral(samples, window) -> float:
    if not window or len(samples) < 2:
        return 0.0
    t0, t1 = parse_time(window["start"]), parse_time(window["end"])
    dt = samples[1][0] - samples[0][0]
    return sum(abs(p) * dt for t, p in samples if t0 <= t < t1)


def cmd_report(args) -> int:
    try:
        a = _read_dataset(Path(args.dir_a))
        b = _read_dataset(Path(args.dir_b))
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    window = b["summary"].get("attack_window") or a["summary"].get("attack_window")
    print(f"comparison: {args.dir_a} vs {args.dir_b}")
    for label, d in (("A", a), ("B", b)):
        s = d["summary"]
        print(f"  [{label}] steps={s['steps']} frames={s['frames']} "
              f"flows={s['flow_count']}")
        print(f"      imbalance integral = {s['imbalance_integral_kws']:.1f} kW*s, "
              f"peak import = {s['peak_import_kw']:.2f} kW, "
              f"pv curtailed = {s['pv_curtailed_kwh']:.2f} kWh")
    if window:
        ia = _window_integral(a["samples"], window)
        ib = _window_integral(b["samples"], window)
        ratio = ib / ia if ia > 0 else float("inf")
        print(f"  attack window {window['start']}-{window['end']}: "
              f"integral A = {ia:.1f}, B = {ib:.1f} kW*s (ratio {ratio:.1f}x)")
    only_a = sorted(a["edges"] - b["edges"])
    only_b = sorted(b["edges"] - a["edges"])
    print(f"  flow edges: {len(a['edges'])} in A, {len(b['edges'])} in B, "
          f"{len(only_a)} only-A, {len(only_b)} only-B")
    for e in only_b:
        print(f"    only in B: {e[0]} {e[2]} -> {e[1]} {e[3]}")
    for e in only_a:
        print(f"    only in A: {e[0]} {e[2]} -> {e[1]} {e[3]}")
    if not only_a and not only_b and a["summary"] == b["summary"]:
        print("  datasets are identical")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gridtwin",
        description="Cyber-physical twin of a small smart-grid segment")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario config")
    p.add_argument("config")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("run", help="run a scenario and export its dataset")
    p.add_argument("config")
    p.add_argument("--until", help="stop at this time-of-day (HH:MM[:SS])")
    p.add_argument("--out", help="dataset output directory")
    p.add_argument("--realtime", action="store_true",
                   help="pace the simulation to wall-clock time")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("report", help="compare two exported datasets")
    p.add_argument("dir_a")
    p.add_argument("dir_b")
    p.set_defaults(fn=cmd_report)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
