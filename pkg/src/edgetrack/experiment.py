"""Hourly tracking experiments and their CSV / event-log outputs."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .config import Scenario
from .reid_model import VehicleAttributes
from .road_network import RoadNetwork
from .trace_ingest import Trajectory, load_trajectories
from .tracker import no_tracking_loss_check, run
from .traffic_gen import COLORS, MODELS, _weighted, generate, select_vois

HOURLY_COLUMNS = ["hour", "runs", "mean_reid_delay_s", "mean_involved_nodes",
                  "mean_cost_s", "censored", "coverage"]
RUN_COLUMNS = ["run_id", "hour", "rep", "vois", "reid_delay_s", "involved_nodes",
               "cost_s", "censored", "coverage", "statuses"]


@dataclass
class RunRecord:
    run_id: str
    hour: int
    rep: int
    vois: int
    reid_delay: float
    involved_nodes: int
    cost: float
    censored: int
    coverage: bool
    statuses: Tuple[str, ...]


@dataclass
class HourRow:
    hour: int
    runs: int
    mean_reid_delay: float
    mean_involved_nodes: float
    mean_cost: float
    censored: int
    coverage: float


@dataclass
class ExperimentReport:
    config_hash: str
    seed: int
    rows: List[HourRow]
    runs: List[RunRecord]
    events: List[str] = field(repr=False)

    def row(self, hour: int) -> Optional[HourRow]:
        return next((r for r in self.rows if r.hour == hour), None)


Traffic = Tuple[List[Trajectory], Dict[str, VehicleAttributes]]


def build_traffic(net: RoadNetwork, sc: Scenario, base_dir: Optional[Path] = None) -> Traffic:
    """Generate traffic, or load a trajectory file and give it random attributes."""
    if sc.trajectories is None:
        return generate(net, sc.traffic_config(net))
    path = Path(sc.trajectories)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    trajectories = load_trajectories(path)
    rng = np.random.default_rng([sc.seed, 1])
    attrs = {tr.plate_id: VehicleAttributes(tr.plate_id, _weighted(rng, COLORS),
                                            _weighted(rng, MODELS))
             for tr in sorted(trajectories, key=lambda t: t.plate_id)}
    return trajectories, attrs


def _mean(values: Sequence[float]) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return sum(vals) / len(vals) if vals else math.nan


def run_experiment(net: RoadNetwork, sc: Scenario, traffic: Optional[Traffic] = None,
                   frame_cache: Optional[dict] = None) -> ExperimentReport:
    """Track ``voi_count`` VoIs for each evaluated hour and repetition.

    Each (hour slot, repetition) draws its VoIs from its own seeded stream,
    so changing the VoI count keeps earlier VoIs as a prefix.
    """
    trajectories, attrs = traffic if traffic is not None else build_traffic(net, sc)
    cfg = sc.tracker_config()
    spec = sc.voi_spec()
    cache = {} if frame_cache is None else frame_cache
    runs: List[RunRecord] = []
    events: List[str] = []
    slot_index = {t0: k for k, t0 in enumerate(sc.start + 3600.0 * i
                                                for i in range(sc.duration_h))}
    for hour, t0 in sc.hour_slots():
        k = slot_index[t0]
        for rep in range(sc.repetitions):
            rng = np.random.default_rng([sc.seed, k, rep])
            queries = select_vois(trajectories, attrs, spec, t0, t0 + 3600.0, rng)
            if not queries:
                continue
            run_id = f"s{k:03d}-h{hour:02d}-r{rep:02d}"
            res = run(net, trajectories, attrs, queries, cfg, frame_cache=cache)
            for line in res.events:
                events.append(json.dumps({"run": run_id, **line}, sort_keys=True))
            runs.append(RunRecord(
                run_id, hour, rep, len(queries), res.reid_delay, res.involved_nodes,
                res.cost, sum(o.censored for o in res.outcomes),
                all(no_tracking_loss_check(res, i) for i in range(len(queries))),
                tuple(o.status for o in res.outcomes)))
    rows = []
    for hour in sorted({h for h, _ in sc.hour_slots()}):
        rs = [r for r in runs if r.hour == hour]
        rows.append(HourRow(hour, len(rs), _mean([r.reid_delay for r in rs]),
                            _mean([r.involved_nodes for r in rs]),
                            _mean([r.cost for r in rs]), sum(r.censored for r in rs),
                            sum(r.coverage for r in rs) / len(rs) if rs else math.nan))
    return ExperimentReport(sc.config_hash(), sc.seed, rows, runs, events)


# --- output ---------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    return str(v)


def hourly_csv(report: ExperimentReport, extra: Optional[Mapping[str, object]] = None) -> str:
    extra = dict(extra or {})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(extra) + HOURLY_COLUMNS)
    for r in report.rows:
        w.writerow([_fmt(v) for v in extra.values()] +
                   [_fmt(v) for v in (r.hour, r.runs, r.mean_reid_delay,
                                      r.mean_involved_nodes, r.mean_cost, r.censored,
                                      r.coverage)])
    return buf.getvalue()


def runs_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUN_COLUMNS)
    for r in report.runs:
        w.writerow([r.run_id, r.hour, r.rep, r.vois, _fmt(r.reid_delay), r.involved_nodes,
                    _fmt(r.cost), r.censored, _fmt(r.coverage), ";".join(r.statuses)])
    return buf.getvalue()


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report: ExperimentReport, out_dir, extra=None) -> Dict[str, Path]:
    out = Path(out_dir)
    files = {
        "hourly": out / "hourly.csv",
        "runs": out / "runs.csv",
        "events": out / "events.jsonl",
        "report": out / "report.json",
    }
    atomic_write(files["hourly"], hourly_csv(report, extra))
    atomic_write(files["runs"], runs_csv(report))
    atomic_write(files["events"], "".join(line + "\n" for line in report.events))
    meta = {"config_hash": report.config_hash, "seed": report.seed,
            "runs": [r.run_id for r in report.runs],
            "files": {k: p.name for k, p in files.items() if k != "report"}}
    atomic_write(files["report"], json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return files
