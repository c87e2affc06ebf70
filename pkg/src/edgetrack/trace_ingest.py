"""GPS records to per-vehicle trajectories and travel-time statistics."""
from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, time as dtime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union
from zoneinfo import ZoneInfo

from .road_network import IntersectionId, RoadNetwork, TravelInterval

log = logging.getLogger(__name__)

DEFAULT_GAP = 30.0
EARTH_RADIUS_M = 6371008.8
TIE_M = 1e-6  # distances closer than this count as equal when snapping

HEADER_ALIASES = (
    {"plate id", "plate_id", "plate", "plateid", "id"},
    {"longitude", "lon", "lng"},
    {"latitude", "lat"},
    {"time", "timestamp"},
    {"speed"},
)


class HeaderError(ValueError):
    pass


@dataclass(frozen=True)
class GpsRecord:
    plate_id: str
    longitude: float
    latitude: float
    time: float  # epoch seconds
    speed: float  # km/h


@dataclass(frozen=True)
class Reject:
    row: int
    raw: Tuple[str, ...]
    reason: str


@dataclass(frozen=True)
class Visit:
    intersection: IntersectionId
    enter: float
    leave: float


@dataclass(frozen=True)
class Trajectory:
    plate_id: str
    visits: Tuple[Visit, ...]

    def __post_init__(self):
        object.__setattr__(self, "visits", tuple(self.visits))

    @property
    def start(self) -> float:
        return self.visits[0].enter

    @property
    def end(self) -> float:
        return self.visits[-1].leave

    def path(self) -> List[IntersectionId]:
        return [v.intersection for v in self.visits]

    def problems(self, net: Optional[RoadNetwork] = None) -> List[str]:
        out = []
        for k, v in enumerate(self.visits):
            if v.enter > v.leave:
                out.append(f"{self.plate_id} visit {k}: enter after leave")
            if k and not self.visits[k - 1].enter < v.enter:
                out.append(f"{self.plate_id} visit {k}: not ordered by enter time")
            if k and net is not None and not net.has_segment(self.visits[k - 1].intersection,
                                                              v.intersection):
                out.append(f"{self.plate_id} visit {k}: no segment "
                           f"{self.visits[k - 1].intersection}->{v.intersection}")
        return out


# --- GPS parsing -------------------------------------------------------------

def _parse_time(text: str, day: date, tz) -> float:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    if "T" in text or "-" in text:
        ts = datetime.fromisoformat(text)
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=tz)
        return ts.timestamp()
    clock = dtime.fromisoformat(text)
    return datetime.combine(day, clock, tzinfo=tz).timestamp()


def _parse_speed(text: str) -> float:
    text = text.strip().lower()
    if text.endswith("km/h"):
        text = text[:-4]
    return float(text)


def parse_gps_csv(data: Union[bytes, str], day: date = date(2012, 1, 1),
                  tz: str = "Asia/Shanghai",
                  delimiter: str = ",") -> Tuple[List[GpsRecord], List[Reject]]:
    """Parse delimiter-separated GPS rows (plate, lon, lat, time, speed).

    A clock-only time such as ``08:34:43`` is placed on ``day`` in ``tz``;
    ISO timestamps and epoch seconds are accepted as-is.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise HeaderError(f"input is not UTF-8 text: {exc}") from None
    zone = ZoneInfo(tz)
    reader = csv.reader(io.StringIO(data), delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise HeaderError("missing header row") from None
    names = [h.strip().lower() for h in header]
    if len(names) < 5 or any(n not in alias for n, alias in zip(names, HEADER_ALIASES)):
        raise HeaderError(f"unrecognised header {header!r}; expected "
                          "plate ID, longitude, latitude, time, speed")
    records, rejects = [], []
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 5:
            rejects.append(Reject(rowno, tuple(row), "too few fields"))
            continue
        plate = row[0].strip()
        try:
            lon, lat = float(row[1]), float(row[2])
        except ValueError:
            rejects.append(Reject(rowno, tuple(row), "bad coordinate"))
            continue
        try:
            t = _parse_time(row[3], day, zone)
        except ValueError:
            rejects.append(Reject(rowno, tuple(row), "bad time"))
            continue
        try:
            speed = _parse_speed(row[4])
        except ValueError:
            rejects.append(Reject(rowno, tuple(row), "bad speed"))
            continue
        if not plate:
            reason = "empty plate id"
        elif not -180.0 <= lon <= 180.0:
            reason = "longitude out of range"
        elif not -90.0 <= lat <= 90.0:
            reason = "latitude out of range"
        elif not speed >= 0:
            reason = "negative speed"
        else:
            records.append(GpsRecord(plate, lon, lat, t, speed))
            continue
        rejects.append(Reject(rowno, tuple(row), reason))
    return records, rejects


def write_rejects(rejects: Iterable[Reject], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["row", "plate_id", "longitude", "latitude", "time", "speed", "reason"])
    for r in rejects:
        raw = list(r.raw[:5]) + [""] * (5 - min(len(r.raw), 5))
        w.writerow([r.row, *raw, r.reason])


# --- map matching ------------------------------------------------------------

def haversine_m(lat1, lon1, lat2, lon2) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dphi = p2 - p1
    dlmb = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def map_match(records: Sequence[GpsRecord], net: RoadNetwork,
              geo: Optional[Mapping[IntersectionId, Tuple[float, float]]] = None,
              radius: float = 50.0) -> Dict[str, List[Tuple[IntersectionId, float]]]:
    """Snap each record to its nearest intersection within ``radius`` metres.

    ``geo`` maps intersection -> (lat, lon) and defaults to ``net.coords``.
    Equidistant intersections (within a micrometre) resolve to the lowest id.
    """
    geo = net.coords if geo is None else geo
    missing = [x for x in net.ids() if x not in geo]
    if missing:
        raise KeyError(f"no coordinates for intersections {missing}")
    nodes = [(x, geo[x][0], geo[x][1]) for x in net.ids()]
    out: Dict[str, List[Tuple[IntersectionId, float]]] = defaultdict(list)
    for rec in records:
        best, best_d = None, math.inf
        for x, lat, lon in nodes:
            d = haversine_m(rec.latitude, rec.longitude, lat, lon)
            if d < best_d - TIE_M:
                best, best_d = x, d
        if best is not None and best_d <= radius:
            out[rec.plate_id].append((best, rec.time))
    return {plate: sorted(pts, key=lambda pt: pt[1]) for plate, pts in sorted(out.items())}


# --- trajectories ------------------------------------------------------------

def extract_trajectories(snapped: Mapping[str, Sequence[Tuple[IntersectionId, float]]],
                         gap_threshold: float = DEFAULT_GAP) -> List[Trajectory]:
    trajectories = []
    for plate in sorted(snapped):
        visits = []
        cur = None  # [intersection, enter, leave]
        for x, t in snapped[plate]:
            if cur is not None and cur[0] == x and t - cur[2] <= gap_threshold:
                cur[2] = t
                continue
            if cur is not None:
                visits.append(Visit(*cur))
            cur = [x, t, t]
        if cur is not None:
            visits.append(Visit(*cur))
        if visits:
            trajectories.append(Trajectory(plate, visits))
    return trajectories


def write_trajectories(trajectories: Iterable[Trajectory], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["plate_id", "intersection", "enter_epoch_s", "leave_epoch_s"])
    for tr in trajectories:
        for v in tr.visits:
            w.writerow([tr.plate_id, v.intersection, repr(float(v.enter)), repr(float(v.leave))])


def read_trajectories(fh) -> List[Trajectory]:
    rows = csv.reader(fh)
    header = next(rows, None)
    if header is None:
        return []
    if [h.strip() for h in header] != ["plate_id", "intersection", "enter_epoch_s",
                                       "leave_epoch_s"]:
        raise HeaderError(f"unexpected trajectory header {header!r}")
    grouped: Dict[str, List[Visit]] = {}
    for row in rows:
        if not row:
            continue
        grouped.setdefault(row[0], []).append(Visit(int(row[1]), float(row[2]), float(row[3])))
    return [Trajectory(p, v) for p, v in grouped.items()]


def save_trajectories(trajectories, path) -> None:
    with open(path, "w", newline="") as fh:
        write_trajectories(trajectories, fh)


def load_trajectories(path) -> List[Trajectory]:
    with open(path, newline="") as fh:
        return read_trajectories(fh)


# --- statistics --------------------------------------------------------------

def observations(trajectories: Iterable[Trajectory], net: RoadNetwork):
    """Observed dwell times per intersection and travel times per segment."""
    dwell: Dict[IntersectionId, List[float]] = defaultdict(list)
    travel: Dict[Tuple[IntersectionId, IntersectionId], List[float]] = defaultdict(list)
    for tr in trajectories:
        prev = None
        for v in tr.visits:
            if v.intersection in net.intersections:
                d = v.leave - v.enter
                if d < 0:
                    log.warning("dropping negative dwell %.3f s of %s at %s",
                                d, tr.plate_id, v.intersection)
                else:
                    dwell[v.intersection].append(d)
            if prev is not None:
                key = (prev.intersection, v.intersection)
                dt = v.enter - prev.leave
                if key not in net.segments:
                    log.debug("no segment %s->%s for %s", *key, tr.plate_id)
                elif dt < 0:
                    log.warning("dropping negative travel time %.3f s of %s on %s->%s",
                                dt, tr.plate_id, *key)
                else:
                    travel[key].append(dt)
            prev = v
    return dwell, travel


def derive_travel_time_stats(trajectories: Iterable[Trajectory], net: RoadNetwork,
                             min_interval: float = 1e-3) -> RoadNetwork:
    """Replace each interval by the [min, max] of its observations.

    Intervals without observations keep their prior value. Zero lower
    bounds (e.g. a single-fix visit) are lifted to ``min_interval`` so the
    result stays a valid network.
    """
    dwell, travel = observations(trajectories, net)

    def span(values):
        lo, hi = min(values), max(values)
        return TravelInterval(max(lo, min_interval), max(hi, min_interval))

    return net.with_intervals(
        dwell={x: span(v) for x, v in dwell.items()},
        travel={k: span(v) for k, v in travel.items()},
    )


@dataclass
class TrafficTimeline:
    """Distinct vehicles per intersection per time bucket.

    ``counts[x][k]`` covers ``[origin + k*bucket, origin + (k+1)*bucket)``.
    """

    origin: float
    bucket: float
    counts: Dict[IntersectionId, List[int]]
    vehicles: Dict[IntersectionId, List[frozenset]] = field(repr=False)

    @property
    def n_buckets(self) -> int:
        return len(next(iter(self.counts.values()), []))

    def mean_rate(self, x: IntersectionId) -> float:
        c = self.counts[x]
        return sum(c) / len(c) if c else 0.0

    def distribution(self) -> Dict[int, float]:
        """Fraction of intersections by their (rounded) mean count per bucket."""
        if not self.counts:
            return {}
        hist = Counter(int(round(self.mean_rate(x))) for x in self.counts)
        return {k: hist[k] / len(self.counts) for k in sorted(hist)}

    def fraction_below(self, threshold: float) -> float:
        if not self.counts:
            return 1.0
        return sum(self.mean_rate(x) < threshold for x in self.counts) / len(self.counts)


def derive_traffic_histogram(trajectories: Iterable[Trajectory], net: RoadNetwork,
                             bucket: float = 60.0, start: Optional[float] = None,
                             end: Optional[float] = None) -> TrafficTimeline:
    if bucket <= 0:
        raise ValueError("bucket must be positive")
    trajectories = list(trajectories)
    visits = [(tr.plate_id, v) for tr in trajectories for v in tr.visits
              if v.intersection in net.intersections]
    if start is None:
        start = min((v.enter for _, v in visits), default=0.0)
        start = math.floor(start / bucket) * bucket
    if end is None:
        end = max((v.leave for _, v in visits), default=start)
    n = max(1, int(math.floor((end - start) / bucket)) + 1)
    sets: Dict[IntersectionId, List[set]] = {x: [set() for _ in range(n)] for x in net.ids()}
    for plate, v in visits:
        k0 = int(math.floor((v.enter - start) / bucket))
        k1 = int(math.floor((v.leave - start) / bucket))
        for k in range(max(k0, 0), min(k1, n - 1) + 1):
            sets[v.intersection][k].add(plate)
    counts = {x: [len(s) for s in ss] for x, ss in sets.items()}
    vehicles = {x: [frozenset(s) for s in ss] for x, ss in sets.items()}
    return TrafficTimeline(start, bucket, counts, vehicles)


def write_histogram(tl: TrafficTimeline, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["intersection", "bucket_start_epoch_s", "vehicles"])
    for x in sorted(tl.counts):
        for k, c in enumerate(tl.counts[x]):
            w.writerow([x, repr(tl.origin + k * tl.bucket), c])
