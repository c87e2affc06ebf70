"""Command-line entry point: ingest, stats, track, sweep, grid.

Exit codes: 0 success, 1 input error, 2 infeasible scenario.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from datetime import date
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import yaml

from . import road_network
from .config import Scenario, check, load_scenario
from .experiment import (HOURLY_COLUMNS, atomic_write, build_traffic, hourly_csv,
                         run_experiment, write_report)
from .rt_control import NodeOverloaded
from .trace_ingest import (HeaderError, derive_traffic_histogram, derive_travel_time_stats,
                           extract_trajectories, load_trajectories, map_match, parse_gps_csv,
                           write_histogram, write_rejects, write_trajectories)
from .traffic_gen import ConfigError

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2
INPUT_ERRORS = (ConfigError, HeaderError, ValueError, KeyError, OSError, yaml.YAMLError)

log = logging.getLogger("edgetrack")

# sweepable scenario fields, by their command-line name
SWEEP_PARAMS = {
    "processors": "processors", "M": "processors", "fps": "fps", "seed": "seed",
    "vois": "voi_count", "voi_count": "voi_count", "repetitions": "repetitions",
    "case2": "case2", "profile_ms": "profile_ms",
}


def _text(buf_writer) -> str:
    buf = io.StringIO()
    buf_writer(buf)
    return buf.getvalue()


def _load_net(path):
    try:
        return road_network.load(path)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from None
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed network: {exc}") from None


def cmd_ingest(args) -> int:
    net = _load_net(args.net)
    data = Path(args.gps).read_bytes()
    if data.strip():
        try:
            records, rejects = parse_gps_csv(data, day=args.date, tz=args.tz,
                                             delimiter=args.delimiter)
        except HeaderError as exc:
            raise HeaderError(f"{args.gps}:1: {exc}") from None
    else:
        records, rejects = [], []
    snapped = map_match(records, net, radius=args.radius)
    trajectories = extract_trajectories(snapped, gap_threshold=args.gap)
    derived = derive_travel_time_stats(trajectories, net)
    hist = derive_traffic_histogram(trajectories, net, bucket=args.bucket)
    # everything is computed before anything is written
    out = Path(args.out)
    atomic_write(out / "trajectories.csv", _text(lambda f: write_trajectories(trajectories, f)))
    atomic_write(out / "network_derived.json",
                 json.dumps(road_network.to_dict(derived), indent=1) + "\n")
    atomic_write(out / "histogram.csv", _text(lambda f: write_histogram(hist, f)))
    atomic_write(out / "rejects.csv", _text(lambda f: write_rejects(rejects, f)))
    visits = sum(len(t.visits) for t in trajectories)
    print(f"{len(records)} records, {len(rejects)} rejected, "
          f"{len(trajectories)} trajectories, {visits} visits -> {out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    net = _load_net(args.net)
    trajectories = load_trajectories(args.trajectories)
    derived = derive_travel_time_stats(trajectories, net)
    hist = derive_traffic_histogram(trajectories, net, bucket=args.bucket)
    summary = {
        "trajectories": len(trajectories),
        "visits": sum(len(t.visits) for t in trajectories),
        "mean_vehicles_per_bucket": {str(x): hist.mean_rate(x) for x in sorted(hist.counts)},
        "distribution": {str(k): v for k, v in hist.distribution().items()},
        "fraction_below_21": hist.fraction_below(21),
        "bucket_s": args.bucket,
    }
    out = Path(args.out)
    atomic_write(out / "network_derived.json",
                 json.dumps(road_network.to_dict(derived), indent=1) + "\n")
    atomic_write(out / "histogram.csv", _text(lambda f: write_histogram(hist, f)))
    atomic_write(out / "summary.json", json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(f"{summary['trajectories']} trajectories; "
          f"{summary['fraction_below_21']:.0%} of intersections below 21 vehicles/bucket")
    return EXIT_OK


def _scenario(args) -> Scenario:
    sc = load_scenario(args.scenario)
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "repetitions", None) is not None:
        over["repetitions"] = args.repetitions
    if over:
        sc = sc.with_overrides(**over)
        errs = check(sc)
        if errs:
            raise ConfigError("; ".join(errs))
    return sc


def cmd_track(args) -> int:
    net = _load_net(args.net)
    sc = _scenario(args)
    traffic = build_traffic(net, sc, Path(args.scenario).parent)
    report = run_experiment(net, sc, traffic)
    write_report(report, args.out)
    for r in report.rows:
        print(f"{r.hour:02d}:00  runs={r.runs:<3d} delay={r.mean_reid_delay:8.1f}s  "
              f"nodes={r.mean_involved_nodes:5.1f}  cost={r.mean_cost:10.1f}s  "
              f"coverage={r.coverage:.0%}")
    print(f"config {report.config_hash} -> {args.out}")
    return EXIT_OK


# --- sweep ---------------------------------------------------------------------

def _convert(name: str, text: str):
    field_name = SWEEP_PARAMS[name]
    if field_name == "profile_ms":
        parts = [float(v) for v in text.split(":")]
        if len(parts) != 3:
            raise ValueError("profile_ms values look like color:model:full")
        return tuple(parts)
    ftype = {f.name: f.type for f in fields(Scenario)}[field_name]
    if ftype in ("int", int):
        return int(text)
    if ftype in ("float", float):
        return float(text)
    return text


def parse_grid(specs: Sequence[str]) -> Dict[str, List[str]]:
    grid: Dict[str, List[str]] = {}
    for spec in specs:
        name, sep, values = spec.partition("=")
        name = name.strip()
        if not sep or name not in SWEEP_PARAMS:
            raise ValueError(f"bad grid entry {spec!r}; use NAME=v1,v2 with NAME in "
                             f"{sorted(SWEEP_PARAMS)}")
        vals = [v.strip() for v in values.split(",") if v.strip()]
        if not vals:
            raise ValueError(f"grid entry {spec!r} has no values")
        for v in vals:
            _convert(name, v)
        grid[name] = vals
    if not grid:
        raise ValueError("sweep grid is empty")
    return grid


def grid_cells(grid: Dict[str, List[str]]) -> List[Tuple[str, Dict[str, str]]]:
    names = list(grid)
    cells = []
    for k, combo in enumerate(itertools.product(*(grid[n] for n in names))):
        cells.append((f"cell{k:03d}", dict(zip(names, combo))))
    return cells


def _run_cell(net_path: str, scenario_path: str, cell_id: str, params: Dict[str, str],
              out_dir: str) -> Tuple[str, str, str]:
    """Returns (cell id, hourly csv text, error message)."""
    try:
        net = _load_net(net_path)
        sc = load_scenario(scenario_path)
        sc = sc.with_overrides(**{SWEEP_PARAMS[k]: _convert(k, v) for k, v in params.items()})
        errs = check(sc)
        if errs:
            raise ConfigError("; ".join(errs))
        traffic = build_traffic(net, sc, Path(scenario_path).parent)
        report = run_experiment(net, sc, traffic)
        write_report(report, Path(out_dir) / cell_id)
        return cell_id, hourly_csv(report, params), ""
    except (NodeOverloaded, *INPUT_ERRORS) as exc:
        return cell_id, "", f"{type(exc).__name__}: {exc}"


def cmd_sweep(args) -> int:
    _load_net(args.net)
    load_scenario(args.scenario)
    grid = parse_grid(args.grid)
    cells = grid_cells(grid)
    names = list(grid)
    out = Path(args.out)
    jobs = [(args.net, args.scenario, cid, params, str(out / "cells")) for cid, params in cells]
    if args.workers == 1:
        results = [_run_cell(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_run_cell, *zip(*jobs)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell"] + names + HOURLY_COLUMNS + ["error"])
    failed = 0
    for (cid, params), (_, text, err) in zip(cells, results):
        if err:
            failed += 1
            w.writerow([cid] + [params[n] for n in names] + [""] * len(HOURLY_COLUMNS) + [err])
            continue
        for row in list(csv.reader(io.StringIO(text)))[1:]:
            w.writerow([cid] + row + [""])
    atomic_write(out / "sweep.csv", buf.getvalue())
    print(f"{len(cells)} cells, {failed} failed -> {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_grid(args) -> int:
    net = road_network.grid(args.rows, args.cols, dwell=(args.dwell_lo, args.dwell_hi),
                            travel=(args.travel_lo, args.travel_hi))
    atomic_write(Path(args.out), json.dumps(road_network.to_dict(net), indent=1) + "\n")
    print(f"{len(net.intersections)} intersections, {len(net.segments)} segments -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="edgetrack", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="GPS CSV -> trajectories, interval stats, histogram")
    p.add_argument("gps")
    p.add_argument("net")
    p.add_argument("out")
    p.add_argument("--date", type=date.fromisoformat, default=date(2012, 1, 1),
                   help="day for clock-only timestamps (default 2012-01-01)")
    p.add_argument("--tz", default="Asia/Shanghai")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--radius", type=float, default=50.0, help="map-matching radius in metres")
    p.add_argument("--gap", type=float, default=30.0,
                   help="seconds without a fix that split two visits")
    p.add_argument("--bucket", type=float, default=60.0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="trajectory file -> interval stats and histogram")
    p.add_argument("trajectories")
    p.add_argument("net")
    p.add_argument("out")
    p.add_argument("--bucket", type=float, default=60.0)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("track", help="run a tracking experiment")
    p.add_argument("net")
    p.add_argument("scenario")
    p.add_argument("out")
    p.add_argument("--seed", type=int)
    p.add_argument("--repetitions", type=int)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("sweep", help="run a tracking experiment over a parameter grid")
    p.add_argument("net")
    p.add_argument("scenario")
    p.add_argument("out")
    p.add_argument("--grid", action="append", default=[], metavar="NAME=v1,v2",
                   help=f"repeatable; NAME in {', '.join(sorted(SWEEP_PARAMS))}")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("grid", help="write a rectangular grid network")
    p.add_argument("out")
    p.add_argument("--rows", type=int, default=4)
    p.add_argument("--cols", type=int, default=4)
    p.add_argument("--dwell-lo", type=float, default=3.0)
    p.add_argument("--dwell-hi", type=float, default=42.0)
    p.add_argument("--travel-lo", type=float, default=30.0)
    p.add_argument("--travel-hi", type=float, default=50.0)
    p.set_defaults(func=cmd_grid)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NodeOverloaded as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except INPUT_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
