"""Synthetic vehicles, attributes and random-walk trajectories."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import nnls

from .reid_model import VehicleAttributes
from .road_network import IntersectionId, RoadNetwork, TravelInterval, neighbors
from .trace_ingest import Trajectory, Visit
from .tracker import VoiQuery

COLORS = {"white": 0.24, "black": 0.19, "silver": 0.14, "grey": 0.12, "red": 0.08,
          "blue": 0.08, "brown": 0.05, "green": 0.04, "yellow": 0.03, "orange": 0.03}
MODELS = {"toyota camry": 0.12, "honda accord": 0.11, "byd f3": 0.1, "vw passat": 0.1,
          "nissan sylphy": 0.09, "buick excelle": 0.09, "hyundai elantra": 0.08,
          "mercedes glb": 0.06, "bmw x3": 0.06, "ford focus": 0.07, "audi a6": 0.06,
          "tesla model 3": 0.06}

# hourly multipliers; normalised to a daily mean of 1 when used
RATE_PRESETS = {
    "flat": [1.0] * 24,
    "residential": [0.15, 0.1, 0.08, 0.08, 0.15, 0.5, 1.3, 2.2, 2.0, 1.4, 1.0, 1.0,
                    1.1, 1.0, 1.0, 1.1, 1.4, 1.8, 2.1, 1.6, 1.1, 0.8, 0.5, 0.3],
    "industrial": [0.15, 0.1, 0.08, 0.08, 0.12, 0.35, 0.9, 1.8, 2.3, 1.6, 1.0, 1.0,
                   1.1, 1.0, 1.0, 1.2, 1.6, 2.2, 1.7, 1.2, 0.9, 0.7, 0.4, 0.25],
    "commercial": [0.2, 0.12, 0.1, 0.1, 0.15, 0.35, 0.7, 1.2, 1.4, 1.3, 1.3, 1.4,
                   1.5, 1.4, 1.3, 1.3, 1.4, 1.5, 1.5, 1.4, 1.3, 1.0, 0.7, 0.4],
}

# share of intersections by daily-mean vehicles per minute
CALIBRATED_TARGETS = {6.0: 0.18, 8.0: 0.2, 9.0: 0.16, 11.0: 0.2, 14.0: 0.16, 18.0: 0.1}

Sampler = Callable[[np.random.Generator, TravelInterval], float]


def uniform_sampler(rng: np.random.Generator, iv: TravelInterval) -> float:
    return float(rng.uniform(iv.lo, iv.hi))


class ConfigError(ValueError):
    pass


@dataclass
class VoiSpec:
    """How VoIs are picked for each tracking run.

    With ``overlap`` the second and later VoIs are drawn from vehicles
    passing the first VoI's origin within ``overlap_window`` seconds.
    """

    count: int = 1
    origin: Optional[IntersectionId] = None
    report_time: Optional[float] = None
    window: float = 3600.0
    overlap: bool = True
    overlap_window: float = 300.0
    min_visits: int = 3
    synthesize: bool = False
    attributes: Optional[VehicleAttributes] = None


@dataclass
class ScenarioConfig:
    seed: int = 0
    start: float = 0.0          # epoch seconds of the scenario's first instant
    duration: float = 3600.0
    timezone: str = "UTC"
    targets: Mapping[IntersectionId, float] = field(default_factory=dict)  # veh/min, daily mean
    hourly: Sequence[float] = field(default_factory=lambda: list(RATE_PRESETS["flat"]))
    hops: Tuple[int, int] = (3, 10)
    colors: Mapping[str, float] = field(default_factory=lambda: dict(COLORS))
    models: Mapping[str, float] = field(default_factory=lambda: dict(MODELS))
    voi: VoiSpec = field(default_factory=VoiSpec)

    def validate(self, net: RoadNetwork) -> List[str]:
        errs = []
        if self.duration <= 0:
            errs.append("duration must be positive")
        if len(self.hourly) != 24:
            errs.append("hourly profile needs 24 values")
        if any(m < 0 for m in self.hourly):
            errs.append("hourly multipliers must be >= 0")
        for x, r in self.targets.items():
            if x not in net.intersections:
                errs.append(f"rate target for unknown intersection {x}")
            if r < 0:
                errs.append(f"negative rate at intersection {x}")
        lo, hi = self.hops
        if not 1 <= lo <= hi:
            errs.append("hops must satisfy 1 <= min <= max")
        if not self.colors or not self.models:
            errs.append("colour and model catalogues must be non-empty")
        if self.voi.origin is not None and self.voi.origin not in net.intersections:
            errs.append(f"VoI origin {self.voi.origin} not in network")
        if self.voi.count < 1:
            errs.append("VoI count must be >= 1")
        return errs


# --- calibration -------------------------------------------------------------

def expected_visits(net: RoadNetwork, hops: Tuple[int, int]) -> np.ndarray:
    """A[i, j]: expected visits to j by one vehicle entering at i."""
    ids = net.ids()
    pos = {x: k for k, x in enumerate(ids)}
    n = len(ids)
    P = np.zeros((n, n))
    for x in ids:
        nb = neighbors(net, x)
        for y in nb:
            P[pos[x], pos[y]] = 1.0 / len(nb)
    lo, hi = hops
    A = np.zeros((n, n))
    step = np.eye(n)
    for h in range(hi):
        survive = sum(1 for L in range(lo, hi + 1) if L > h) / (hi - lo + 1)
        A += survive * step
        step = step @ P
    return A


def calibrate_rates(net: RoadNetwork, targets: Mapping[IntersectionId, float],
                    hops: Tuple[int, int], bucket: float = 60.0) -> Dict[IntersectionId, float]:
    """Entry rates (veh/min) whose random walks produce the target loads.

    A target is the mean number of distinct vehicles seen per ``bucket``.
    A visit with dwell ``d`` overlaps ``1 + d / bucket`` buckets on average,
    so targets are first converted to visit rates. Solved as non-negative
    least squares; nodes with no target aim for 0.
    """
    ids = net.ids()
    A = expected_visits(net, hops)
    overlap = np.array([1.0 + (net.dwell(x).lo + net.dwell(x).hi) / 2.0 / bucket for x in ids])
    b = np.array([float(targets.get(x, 0.0)) for x in ids]) * (60.0 / bucket) / overlap
    lam, _ = nnls(A.T, b)
    return {x: float(r) for x, r in zip(ids, lam)}


def calibrated_targets(net: RoadNetwork, seed: int = 0,
                       shares: Mapping[float, float] = CALIBRATED_TARGETS) -> Dict[IntersectionId, float]:
    """Per-intersection daily-mean loads matching the configured shares."""
    ids = net.ids()
    rng = np.random.default_rng(seed)
    levels = sorted(shares)
    counts = [int(math.floor(shares[v] * len(ids))) for v in levels]
    k = 0
    while sum(counts) < len(ids):
        counts[k % len(counts)] += 1
        k += 1
    values = [v for v, c in zip(levels, counts) for _ in range(c)]
    rng.shuffle(values)
    return {x: float(v) for x, v in zip(ids, values)}


def _normalised(hourly: Sequence[float]) -> np.ndarray:
    h = np.asarray(hourly, dtype=float)
    m = h.mean()
    return h / m if m > 0 else h


# --- generation --------------------------------------------------------------

def _arrivals(rng: np.random.Generator, rate_per_min: float, hourly: np.ndarray,
              start: float, duration: float, hour_of: Callable[[float], int]) -> List[float]:
    """Non-homogeneous Poisson arrivals by thinning."""
    peak = rate_per_min * float(hourly.max()) / 60.0
    if peak <= 0:
        return []
    out = []
    t = start
    end = start + duration
    while True:
        t += float(rng.exponential(1.0 / peak))
        if t >= end:
            return out
        accept = rate_per_min * hourly[hour_of(t)] / 60.0 / peak
        if rng.random() < accept:
            out.append(t)


def _weighted(rng: np.random.Generator, table: Mapping[str, float]) -> str:
    keys = list(table)
    w = np.array([table[k] for k in keys], dtype=float)
    return keys[int(rng.choice(len(keys), p=w / w.sum()))]


def random_walk(net: RoadNetwork, rng: np.random.Generator, origin: IntersectionId,
                enter: float, n_visits: int, sampler: Sampler = uniform_sampler) -> List[Visit]:
    visits = []
    x, t = origin, enter
    for k in range(n_visits):
        leave = t + sampler(rng, net.dwell(x))
        visits.append(Visit(x, t, leave))
        nb = neighbors(net, x)
        if k == n_visits - 1 or not nb:
            break
        y = nb[int(rng.integers(len(nb)))]
        t = leave + sampler(rng, net.segment(x, y).travel)
        x = y
    return visits


def hour_fn(timezone: str) -> Callable[[float], int]:
    from datetime import datetime
    from zoneinfo import ZoneInfo
    zone = ZoneInfo(timezone)
    cache: Dict[int, int] = {}

    def hour_of(t: float) -> int:
        key = int(t // 900)
        h = cache.get(key)
        if h is None:
            h = datetime.fromtimestamp(key * 900, zone).hour
            cache[key] = h
        return h
    return hour_of


def generate(net: RoadNetwork, cfg: ScenarioConfig, sampler: Sampler = uniform_sampler
             ) -> Tuple[List[Trajectory], Dict[str, VehicleAttributes]]:
    errs = cfg.validate(net)
    if errs:
        raise ConfigError("; ".join(errs))
    rng = np.random.default_rng(cfg.seed)
    hourly = _normalised(cfg.hourly)
    hour_of = hour_fn(cfg.timezone)
    rates = calibrate_rates(net, cfg.targets, cfg.hops) if cfg.targets else {}
    starts = []
    for x in net.ids():
        for t in _arrivals(rng, rates.get(x, 0.0), hourly, cfg.start, cfg.duration, hour_of):
            starts.append((t, x))
    starts.sort()
    lo, hi = cfg.hops
    trajectories, attrs = [], {}
    width = max(6, len(str(len(starts))))
    for k, (t, x) in enumerate(starts):
        plate = f"V{k:0{width}d}"
        n_visits = int(rng.integers(lo, hi + 1))
        trajectories.append(Trajectory(plate, random_walk(net, rng, x, t, n_visits, sampler)))
        attrs[plate] = VehicleAttributes(plate, _weighted(rng, cfg.colors),
                                         _weighted(rng, cfg.models), plate)
    return trajectories, attrs


# --- VoI selection -------------------------------------------------------------

def voi_candidates(trajectories: Sequence[Trajectory], spec: VoiSpec,
                   t_lo: float, t_hi: float) -> List[Tuple[Trajectory, int]]:
    """(trajectory, origin visit index) pairs usable as a VoI report."""
    out = []
    for tr in trajectories:
        for k, v in enumerate(tr.visits):
            if len(tr.visits) - k < spec.min_visits:
                break
            if spec.origin is not None and v.intersection != spec.origin:
                continue
            if t_lo <= v.enter < t_hi:
                out.append((tr, k))
                break
    return out


def _shared_prefix(a: Sequence[IntersectionId], b: Sequence[IntersectionId]) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def select_vois(trajectories: Sequence[Trajectory], attrs: Mapping[str, VehicleAttributes],
                spec: VoiSpec, t_lo: float, t_hi: float, rng: np.random.Generator,
                count: Optional[int] = None) -> List[VoiQuery]:
    """Pick VoIs reported in ``[t_lo, t_hi)``.

    The ordering does not depend on ``count``, so a smaller count always
    yields a prefix of a larger one.
    """
    count = spec.count if count is None else count
    pool = voi_candidates(trajectories, spec, t_lo, t_hi)
    if not pool:
        return []
    order = [int(i) for i in rng.permutation(len(pool))]
    first_tr, first_k = pool[order[0]]
    chosen = [(first_tr, first_k)]
    if spec.overlap:
        o = first_tr.visits[first_k]
        first_path = first_tr.path()[first_k:]
        route = set(first_path)
        near, touching, rest = [], [], []
        for rank, i in enumerate(order[1:]):
            tr, k = pool[i]
            v = tr.visits[k]
            if v.intersection == o.intersection and abs(v.enter - o.enter) <= spec.overlap_window:
                # prefer convoys: longest shared route prefix, then closest in time
                near.append((-_shared_prefix(first_path, tr.path()[k:]),
                             abs(v.enter - o.enter), rank, pool[i]))
            elif route & set(tr.path()[k:]):
                touching.append(pool[i])
            else:
                rest.append(pool[i])
        ranked = [c[-1] for c in sorted(near, key=lambda c: c[:3])] + touching + rest
    else:
        ranked = [pool[i] for i in order[1:]]
    chosen += ranked[:count - 1]
    return [VoiQuery(attrs[tr.plate_id], tr.visits[k].intersection, tr.visits[k].enter)
            for tr, k in chosen]


def plant_voi(net: RoadNetwork, trajectories: List[Trajectory],
              attrs: Dict[str, VehicleAttributes], cfg: ScenarioConfig,
              rng: Optional[np.random.Generator] = None,
              sampler: Sampler = uniform_sampler) -> Tuple[Trajectory, VoiQuery]:
    """Designate one VoI, selecting from traffic or synthesizing it.

    A synthesized VoI is appended to ``trajectories`` and ``attrs``.
    """
    spec = cfg.voi
    rng = np.random.default_rng(cfg.seed + 7919) if rng is None else rng
    t_lo = cfg.start if spec.report_time is None else spec.report_time
    t_hi = t_lo + (spec.window if spec.report_time is not None else cfg.duration)
    queries = select_vois(trajectories, attrs, spec, t_lo, t_hi, rng, count=1)
    if queries:
        q = queries[0]
        tr = next(tr for tr in trajectories if tr.plate_id == q.voi.plate_id)
        return tr, q
    if not spec.synthesize:
        raise ConfigError("no vehicle passes the VoI origin in the report window "
                          "and synthesis is disabled")
    origin = spec.origin if spec.origin is not None else net.ids()[int(rng.integers(len(net.ids())))]
    hi = max(spec.min_visits, cfg.hops[1])
    visits = random_walk(net, rng, origin, t_lo, hi, sampler)
    plate = "VOI-0"
    n = 0
    while plate in attrs:
        n += 1
        plate = f"VOI-{n}"
    voi = spec.attributes or VehicleAttributes(plate, _weighted(rng, cfg.colors),
                                               _weighted(rng, cfg.models), plate)
    if voi.plate_id != plate:
        voi = VehicleAttributes(plate, voi.color, voi.make_model, plate)
    tr = Trajectory(plate, visits)
    trajectories.append(tr)
    attrs[plate] = voi
    return tr, VoiQuery(voi, origin, t_lo)


def plant_convoy(net: RoadNetwork, trajectories: List[Trajectory],
                 attrs: Dict[str, VehicleAttributes], rng: np.random.Generator,
                 origin: IntersectionId, enter: float, size: int, hops: int = 10,
                 headway: Tuple[float, float] = (2.0, 20.0),
                 sampler: Sampler = uniform_sampler) -> List[VoiQuery]:
    """Append ``size`` vehicles driving one shared route a few seconds apart.

    Each member samples its own dwell and travel times along the route.
    Returns one query per member, reported as it enters ``origin``.
    """
    route = [v.intersection for v in random_walk(net, rng, origin, enter, hops, sampler)]
    queries = []
    t0 = enter
    for j in range(size):
        if j:
            t0 += float(rng.uniform(*headway))
        visits, t = [], t0
        for k, x in enumerate(route):
            leave = t + sampler(rng, net.dwell(x))
            visits.append(Visit(x, t, leave))
            if k + 1 < len(route):
                t = leave + sampler(rng, net.segment(x, route[k + 1]).travel)
        n = len(attrs)
        plate = f"CONVOY-{n}"
        while plate in attrs:
            n += 1
            plate = f"CONVOY-{n}"
        voi = VehicleAttributes(plate, _weighted(rng, COLORS), _weighted(rng, MODELS), plate)
        trajectories.append(Trajectory(plate, visits))
        attrs[plate] = voi
        queries.append(VoiQuery(voi, origin, t0))
    return queries
