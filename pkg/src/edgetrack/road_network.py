"""Directed road network with travel-time interval statistics."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

IntersectionId = int


class UnknownIntersection(KeyError):
    pass


class DeadEnd(ValueError):
    pass


@dataclass(frozen=True)
class TravelInterval:
    lo: float
    hi: float

    def is_valid(self) -> bool:
        return 0 < self.lo <= self.hi

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


@dataclass(frozen=True)
class RoadSegment:
    src: IntersectionId
    dst: IntersectionId
    travel: TravelInterval


@dataclass(frozen=True)
class RoadNetwork:
    """Intersections with their dwell intervals plus directed segments.

    ``coords`` optionally maps an intersection to ``(lat, lon)`` degrees and
    is only needed for map matching.
    """

    intersections: Mapping[IntersectionId, TravelInterval]
    segments: Mapping[Tuple[IntersectionId, IntersectionId], RoadSegment]
    coords: Mapping[IntersectionId, Tuple[float, float]] = field(default_factory=dict)
    _adj: Dict[IntersectionId, List[IntersectionId]] = field(
        init=False, repr=False, compare=False)

    def __post_init__(self):
        adj: Dict[IntersectionId, List[IntersectionId]] = {}
        for (a, b) in self.segments:
            adj.setdefault(a, []).append(b)
        for v in adj.values():
            v.sort()
        object.__setattr__(self, "_adj", adj)

    @classmethod
    def build(cls, intersections, segments, coords=None) -> "RoadNetwork":
        """``intersections``: {id: (lo, hi)}; ``segments``: iterable of (a, b, lo, hi)."""
        inter = {int(k): TravelInterval(float(v[0]), float(v[1]))
                 for k, v in intersections.items()}
        segs = {}
        for a, b, lo, hi in segments:
            segs[(int(a), int(b))] = RoadSegment(int(a), int(b), TravelInterval(float(lo), float(hi)))
        return cls(inter, segs, dict(coords or {}))

    def __contains__(self, x) -> bool:
        return x in self.intersections

    def ids(self) -> List[IntersectionId]:
        return sorted(self.intersections)

    def dwell(self, x: IntersectionId) -> TravelInterval:
        try:
            return self.intersections[x]
        except KeyError:
            raise UnknownIntersection(x) from None

    def segment(self, a: IntersectionId, b: IntersectionId) -> RoadSegment:
        try:
            return self.segments[(a, b)]
        except KeyError:
            raise KeyError(f"no road segment {a}->{b}") from None

    def has_segment(self, a: IntersectionId, b: IntersectionId) -> bool:
        return (a, b) in self.segments

    def with_intervals(self, dwell=None, travel=None) -> "RoadNetwork":
        inter = dict(self.intersections)
        inter.update(dwell or {})
        segs = dict(self.segments)
        for key, iv in (travel or {}).items():
            segs[key] = replace(segs[key], travel=iv)
        return RoadNetwork(inter, segs, dict(self.coords))


def neighbors(net: RoadNetwork, x: IntersectionId) -> List[IntersectionId]:
    if x not in net.intersections:
        raise UnknownIntersection(x)
    return list(net._adj.get(x, ()))


def relative_deadline(net: RoadNetwork, x: IntersectionId) -> float:
    """Shortest lower-bound travel time from ``x`` to any successor."""
    nbrs = neighbors(net, x)
    if not nbrs:
        raise DeadEnd(f"dead-end intersection has no deadline: {x}")
    return min(net.segments[(x, y)].travel.lo for y in nbrs)


def validate(net) -> List[str]:
    """Invariant violations of a network, or of a raw network-file dict.

    Duplicate segments can only be seen in the raw form, since a built
    network keys segments by endpoint pair.
    """
    problems = []
    if isinstance(net, dict):
        problems += validate_segment_list(
            [(r["from"], r["to"]) for r in net.get("segments", [])])
        net = from_dict(net, strict=False)
    for x, iv in sorted(net.intersections.items()):
        if not iv.is_valid():
            problems.append(f"intersection {x}: invalid dwell interval [{iv.lo}, {iv.hi}]")
    for (a, b), seg in sorted(net.segments.items()):
        if (seg.src, seg.dst) != (a, b):
            problems.append(f"segment key {a}->{b} does not match endpoints {seg.src}->{seg.dst}")
        if a == b:
            problems.append(f"segment {a}->{b}: self loop")
        for end in (a, b):
            if end not in net.intersections:
                problems.append(f"segment {a}->{b}: unknown intersection {end}")
        if not seg.travel.is_valid():
            problems.append(f"segment {a}->{b}: invalid travel interval "
                            f"[{seg.travel.lo}, {seg.travel.hi}]")
    return problems


def validate_segment_list(segments) -> List[str]:
    """Duplicate detection for raw (a, b, lo, hi) rows before they collapse into a map."""
    seen = set()
    out = []
    for a, b, *_ in segments:
        if (a, b) in seen:
            out.append(f"duplicate segment {a}->{b}")
        seen.add((a, b))
    return out


def grid(rows: int = 4, cols: int = 4, dwell=(3.0, 42.0), travel=(30.0, 50.0),
         spacing_deg: float = 0.005, origin=(22.53, 114.02)) -> RoadNetwork:
    """Two-way street grid with ids 1..rows*cols in row-major order."""
    inter = {}
    coords = {}
    segs = []
    for r in range(rows):
        for c in range(cols):
            x = r * cols + c + 1
            inter[x] = tuple(dwell)
            coords[x] = (origin[0] + r * spacing_deg, origin[1] + c * spacing_deg)
            for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    segs.append((x, rr * cols + cc + 1, travel[0], travel[1]))
    return RoadNetwork.build(inter, segs, coords)


# --- file format -------------------------------------------------------------

def to_dict(net: RoadNetwork) -> dict:
    inters = []
    for x in net.ids():
        iv = net.intersections[x]
        row = {"id": x, "dwell_lo_s": iv.lo, "dwell_hi_s": iv.hi}
        if x in net.coords:
            row["lat"], row["lon"] = net.coords[x]
        inters.append(row)
    segs = [{"from": a, "to": b, "lo_s": s.travel.lo, "hi_s": s.travel.hi}
            for (a, b), s in sorted(net.segments.items())]
    return {"intersections": inters, "segments": segs}


def from_dict(data: dict, strict: bool = True) -> RoadNetwork:
    rows = data["segments"]
    dups = validate_segment_list([(r["from"], r["to"]) for r in rows])
    if dups and strict:
        raise ValueError("; ".join(dups))
    inter = {}
    coords = {}
    for r in data["intersections"]:
        x = int(r["id"])
        if x in inter and strict:
            raise ValueError(f"duplicate intersection {x}")
        inter[x] = (r["dwell_lo_s"], r["dwell_hi_s"])
        if "lat" in r and "lon" in r:
            coords[x] = (float(r["lat"]), float(r["lon"]))
    segs = [(r["from"], r["to"], r["lo_s"], r["hi_s"]) for r in rows]
    return RoadNetwork.build(inter, segs, coords)


def load(path) -> RoadNetwork:
    return from_dict(json.loads(Path(path).read_text()))


def dump(net: RoadNetwork, path) -> None:
    Path(path).write_text(json.dumps(to_dict(net), indent=1) + "\n")
