"""Active-period propagation and the multi-node tracking loop.

A tracking run follows one or more vehicles of interest (VoIs) through the
road network. Each activated edge node processes camera frames during its
active period; the per-frame granularity comes from admission control and
depends only on how many vehicles the camera sees, so frame processing is
shared by every VoI and branch that keeps the node active.
"""
from __future__ import annotations

import bisect
import heapq
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .reid_model import (CascadeProfile, DEFAULT_PROFILE, Granularity, MatchOutcome,
                         VehicleAttributes, match)
from .road_network import DeadEnd, IntersectionId, RoadNetwork, TravelInterval, relative_deadline
from .rt_control import (DEFAULT_PERIOD, DEFAULT_PROCESSORS, NodeOverloaded, TaskSet,
                         completion_bound, plan_admission)
from .trace_ingest import Trajectory, Visit

EPS = 1e-9


class InvalidPeriod(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ActivePeriod:
    start: float
    end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise InvalidPeriod(f"active period [{self.start}, {self.end}] is empty")

    def contains(self, a: float, b: float) -> bool:
        return self.start - EPS <= a and b <= self.end + EPS

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class VoiQuery:
    voi: VehicleAttributes
    origin: IntersectionId
    report_time: float


# --- active periods ----------------------------------------------------------

def initial_active_period(q: VoiQuery, net: RoadNetwork) -> ActivePeriod:
    d = relative_deadline(net, q.origin)
    return ActivePeriod(q.report_time, q.report_time + net.dwell(q.origin).hi + d)


def propagate_case1(t_p: float, seg: TravelInterval, dwell_x: TravelInterval,
                    deadline_x: float) -> ActivePeriod:
    """Successor window when the VoI was identified and left its node at ``t_p``."""
    return ActivePeriod(t_p + seg.lo, t_p + seg.hi + dwell_x.hi + deadline_x)


def propagate_case2(prev: ActivePeriod, deadline_p: float, dwell_p: TravelInterval,
                    seg: TravelInterval, dwell_x: TravelInterval, deadline_x: float,
                    literal: bool = False) -> ActivePeriod:
    """Successor window when the predecessor only produced suspects.

    The earliest arrival adds the predecessor's minimum dwell to the
    segment's minimum travel time. ``literal=True`` uses the successor's
    minimum dwell instead, which can start the window after the VoI has
    already arrived.
    """
    first_dwell = dwell_x.lo if literal else dwell_p.lo
    start = prev.start + first_dwell + seg.lo
    end = prev.end - deadline_p + dwell_x.hi + seg.hi + deadline_x
    return ActivePeriod(start, end)


def merge_periods(periods: Iterable[ActivePeriod]) -> List[ActivePeriod]:
    out: List[ActivePeriod] = []
    for p in sorted(periods):
        if out and p.start <= out[-1].end:
            if p.end > out[-1].end:
                out[-1] = ActivePeriod(out[-1].start, p.end)
        else:
            out.append(p)
    return out


# --- per-node frame model ----------------------------------------------------

@dataclass(frozen=True)
class TrackerConfig:
    profile: CascadeProfile = DEFAULT_PROFILE
    processors: int = DEFAULT_PROCESSORS
    period: float = DEFAULT_PERIOD
    literal_case2: bool = False
    max_activations: int = 2000


@dataclass(frozen=True)
class FramePlan:
    n: int
    n_model: int
    n_full: int
    bounds: Tuple[float, ...]  # completion bound by granularity 1..3 (0 if unused)
    exec_sum: float

    @property
    def crowded(self) -> bool:
        return self.n_full < self.n

    def granularity(self, task_id: int) -> Granularity:
        if task_id < self.n_full:
            return Granularity.FULL
        if task_id < self.n_model:
            return Granularity.MODEL_MAKE
        return Granularity.COLOR


@lru_cache(maxsize=65536)
def frame_plan(n: int, profile: CascadeProfile, processors: int, period: float,
               deadline: float) -> FramePlan:
    adm = plan_admission(n, profile, processors, period, deadline)
    execs = adm.exec_times(profile)
    ts = TaskSet.from_exec_times(execs, period, processors)
    bounds = [0.0, 0.0, 0.0]
    seen = set()
    for i, g in enumerate(adm.assignment()):
        if g not in seen:
            seen.add(g)
            bounds[int(g) - 1] = completion_bound(ts, i)
    return FramePlan(n, adm.n_model, adm.n_full, tuple(bounds), sum(execs))


@dataclass
class Sighting:
    """What one node's frames saw of one vehicle visit within a window."""

    visit_idx: int
    first_frame: int
    last_frame: int
    best: Granularity
    best_frame: int
    best_bound: float
    last_bound: float


class NodeFrames:
    """Vehicles detected per frame at one intersection.

    Frame ``k`` is captured at ``k * period``. A vehicle is visible in every
    frame inside its visit. Frames are grouped into maximal runs with a
    constant set of visible vehicles; within a run the task ids follow
    (enter time, plate).
    """

    def __init__(self, node: IntersectionId, visits: Sequence[Tuple[str, Visit]],
                 deadline: float, cfg: TrackerConfig):
        self.node = node
        self.deadline = deadline
        self.cfg = cfg
        self._plans: Dict[int, FramePlan] = {}
        self._prefix: Optional[list] = None
        p = cfg.period
        order = sorted(range(len(visits)), key=lambda i: (visits[i][1].enter, visits[i][0]))
        self.visits = [visits[i] for i in order]
        deltas: Dict[int, List[Tuple[int, int]]] = {}
        self.vk0: List[int] = []  # first and last frame of each visit
        self.vk1: List[int] = []
        for idx, (_, v) in enumerate(self.visits):
            k0 = math.ceil(v.enter / p - EPS)
            k1 = math.floor(v.leave / p + EPS)
            self.vk0.append(k0)
            self.vk1.append(k1)
            if k0 <= k1:
                deltas.setdefault(k0, []).append((1, idx))
                deltas.setdefault(k1 + 1, []).append((-1, idx))
        self.seg_start: List[int] = []
        self.seg_end: List[int] = []
        self.seg_present: List[Tuple[int, ...]] = []
        present: List[int] = []
        keys = sorted(deltas)
        for j, k in enumerate(keys):
            for sign, idx in deltas[k]:
                if sign > 0:
                    bisect.insort(present, idx)
                else:
                    present.remove(idx)
            if present and j + 1 < len(keys):
                self.seg_start.append(k)
                self.seg_end.append(keys[j + 1] - 1)
                self.seg_present.append(tuple(present))
        self.max_span = max((b - a for a, b in zip(self.vk0, self.vk1)), default=0)
        self.by_plate: Dict[str, List[int]] = {}
        for idx, (plate, _) in enumerate(self.visits):
            self.by_plate.setdefault(plate, []).append(idx)

    def plan(self, n: int, frame: Optional[int] = None) -> FramePlan:
        fp = self._plans.get(n)
        if fp is not None:
            return fp
        c = self.cfg
        try:
            fp = frame_plan(n, c.profile, c.processors, c.period, self.deadline)
        except NodeOverloaded as exc:
            where = f"node {self.node}" if frame is None else \
                f"node {self.node} frame {frame} (t={frame * c.period:.3f}s)"
            raise NodeOverloaded(f"{where}: {exc}") from None
        self._plans[n] = fp
        return fp

    def frame_range(self, start: float, end: float) -> Tuple[int, int]:
        p = self.cfg.period
        return math.ceil(start / p - EPS), math.floor(end / p + EPS)

    def segments(self, k0: int, k1: int):
        """Yield (first, last, present) for runs overlapping frames [k0, k1]."""
        j = max(bisect.bisect_right(self.seg_start, k0) - 1, 0)
        while j < len(self.seg_start) and self.seg_start[j] <= k1:
            a, b = max(self.seg_start[j], k0), min(self.seg_end[j], k1)
            if a <= b:
                yield a, b, self.seg_present[j]
            j += 1

    def observe(self, k0: int, k1: int) -> Dict[int, Sighting]:
        seen: Dict[int, Sighting] = {}
        lo = bisect.bisect_left(self.vk0, k0 - self.max_span)
        hi = bisect.bisect_right(self.vk0, k1)
        for idx in range(lo, hi):
            a, b = max(self.vk0[idx], k0), min(self.vk1[idx], k1)
            if a <= b:
                seen[idx] = Sighting(idx, a, b, Granularity.COLOR, a, 0.0, 0.0)
        # only the upgraded task slots can improve on colour matching
        full, model = Granularity.FULL, Granularity.MODEL_MAKE
        for a, _, present in self.segments(k0, k1):
            plan = self.plan(len(present), a)
            for tid in range(plan.n_model):
                s = seen[present[tid]]
                g = full if tid < plan.n_full else model
                if g > s.best:
                    s.best, s.best_frame = g, a
        for s in seen.values():
            s.best_bound = self.bound_at(s.visit_idx, s.best_frame)
            s.last_bound = self.bound_at(s.visit_idx, s.last_frame)
        return seen

    def bound_at(self, idx: int, frame: int) -> float:
        """Completion bound of visit ``idx``'s task in ``frame``."""
        j = bisect.bisect_right(self.seg_start, frame) - 1
        present = self.seg_present[j]
        plan = self.plan(len(present), frame)
        return plan.bounds[int(plan.granularity(present.index(idx))) - 1]

    def work(self, k0: int, k1: int) -> Tuple[float, int, int]:
        """(processing seconds, frames with vehicles, crowded frames) over [k0, k1]."""
        if self._prefix is None:
            self._prefix = self._build_prefix()
        if not self._prefix:
            return self._work_loop(k0, k1)
        j0 = bisect.bisect_left(self.seg_end, k0)
        j1 = bisect.bisect_right(self.seg_start, k1) - 1
        if j0 > j1:
            return 0.0, 0, 0
        if j0 == j1:
            return self._work_loop(k0, k1)
        head = self._work_loop(k0, self.seg_end[j0])
        tail = self._work_loop(self.seg_start[j1], k1)
        lo, hi = self._prefix[j0 + 1], self._prefix[j1]
        return (head[0] + tail[0] + hi[0] - lo[0], head[1] + tail[1] + hi[1] - lo[1],
                head[2] + tail[2] + hi[2] - lo[2])

    def _build_prefix(self):
        acc = [(0.0, 0, 0)]
        try:
            for a, b, present in zip(self.seg_start, self.seg_end, self.seg_present):
                plan = self.plan(len(present), a)
                nf = b - a + 1
                t, f, c = acc[-1]
                acc.append((t + nf * plan.exec_sum, f + nf, c + (nf if plan.crowded else 0)))
        except NodeOverloaded:
            return []  # some frame is infeasible; only raise if it is actually processed
        return acc

    def _work_loop(self, k0: int, k1: int) -> Tuple[float, int, int]:
        total, frames, crowded = 0.0, 0, 0
        for a, b, present in self.segments(k0, k1):
            plan = self.plan(len(present), a)
            nf = b - a + 1
            total += nf * plan.exec_sum
            frames += nf
            if plan.crowded:
                crowded += nf
        return total, frames, crowded


# --- tracking run ------------------------------------------------------------

@dataclass
class TrackingBranch:
    branch_id: int
    voi_id: int
    intersection: IntersectionId
    period: ActivePeriod
    parent: Optional[int]
    suspects: set
    status: str = "pending"  # pending, active, terminated, confirmed
    activated_at: float = 0.0
    ended_at: Optional[float] = None
    case: str = "origin"

    @property
    def effective(self) -> Optional[ActivePeriod]:
        start = max(self.period.start, self.activated_at)
        end = self.period.end if self.ended_at is None else min(self.period.end, self.ended_at)
        if end <= start:
            return None
        return ActivePeriod(start, end)


@dataclass
class VoiOutcome:
    query: VoiQuery
    trajectory: Trajectory
    origin_index: int
    status: str = "tracking"
    confirmations: List[Tuple[int, IntersectionId, float]] = field(default_factory=list)
    visit_delays: List[float] = field(default_factory=list)
    censored: int = 0
    periods: Dict[IntersectionId, List[ActivePeriod]] = field(default_factory=dict)
    cost: float = 0.0
    exit_time: Optional[float] = None
    errors: List[str] = field(default_factory=list)

    @property
    def involved_nodes(self) -> int:
        return len(self.periods)

    @property
    def reid_delay(self) -> float:
        if not self.visit_delays:
            return math.nan
        return sum(self.visit_delays) / len(self.visit_delays)

    @property
    def total_delay(self) -> float:
        return sum(self.visit_delays)


@dataclass
class TrackingRun:
    events: List[dict]
    outcomes: List[VoiOutcome]
    node_periods: Dict[IntersectionId, List[ActivePeriod]]
    node_frames: Dict[IntersectionId, NodeFrames] = field(repr=False)
    branches: List[TrackingBranch] = field(repr=False)
    cost: float = 0.0

    @property
    def involved_nodes(self) -> int:
        return len(self.node_periods)

    @property
    def reid_delay(self) -> float:
        vals = [o.reid_delay for o in self.outcomes if not math.isnan(o.reid_delay)]
        return sum(vals) / len(vals) if vals else math.nan

    @property
    def active_time(self) -> float:
        return sum(p.length for ps in self.node_periods.values() for p in ps)

    def log_lines(self) -> List[str]:
        return [json.dumps(e, sort_keys=True) for e in self.events]


def _origin_index(tr: Trajectory, q: VoiQuery) -> int:
    for k, v in enumerate(tr.visits):
        if v.intersection == q.origin and v.enter - EPS <= q.report_time <= v.leave + EPS:
            return k
    raise ValueError(f"VoI {q.voi.plate_id} is not at intersection {q.origin} "
                     f"at report time {q.report_time}")


class _Runner:
    def __init__(self, net, trajectories, attributes, queries, cfg, frame_cache=None):
        self.net = net
        self.cfg = cfg
        self.attributes = attributes
        self.by_plate = {tr.plate_id: tr for tr in trajectories}
        self.queries = list(queries)
        self.frame_cache = {} if frame_cache is None else frame_cache
        per_node = self.frame_cache.get("visits")
        if per_node is None:
            per_node = {}
            for tr in trajectories:
                for v in tr.visits:
                    per_node.setdefault(v.intersection, []).append((tr.plate_id, v))
            self.frame_cache["visits"] = per_node
        self._visits = per_node
        self.nodes: Dict[IntersectionId, NodeFrames] = {}
        self.events: List[dict] = []
        self.queue: list = []
        self.seq = 0
        self.branches: List[TrackingBranch] = []
        self.outcomes: List[VoiOutcome] = []
        self.children: Dict[Tuple[int, IntersectionId, str], int] = {}
        self.live: Dict[int, set] = {}
        self.n_branches: Dict[int, int] = {}

    def node(self, x) -> NodeFrames:
        nf = self.nodes.get(x)
        if nf is None:
            key = (x, self.cfg)
            nf = self.frame_cache.get(key)
            if nf is None:
                nf = NodeFrames(x, self._visits.get(x, []), relative_deadline(self.net, x),
                                self.cfg)
                self.frame_cache[key] = nf
            self.nodes[x] = nf
        return nf

    def emit(self, t, kind, voi=None, node=None, branch=None, **payload):
        rec = {"t": t, "kind": kind}
        if voi is not None:
            rec["voi"] = voi
        if node is not None:
            rec["node"] = node
        if branch is not None:
            rec["branch"] = branch
        rec.update(payload)
        self.events.append(rec)

    def push(self, t, kind, *payload):
        heapq.heappush(self.queue, (t, self.seq, kind, payload))
        self.seq += 1

    def new_branch(self, voi_id, x, period, parent, suspects, t, case) -> TrackingBranch:
        br = TrackingBranch(len(self.branches), voi_id, x, period, parent, set(suspects),
                            activated_at=t, case=case)
        self.branches.append(br)
        self.live[voi_id].add(br.branch_id)
        self.n_branches[voi_id] = self.n_branches.get(voi_id, 0) + 1
        self.push(t, "activate", br.branch_id)
        return br

    def run(self) -> "TrackingRun":
        for vid, q in enumerate(self.queries):
            tr = self.by_plate[q.voi.plate_id]
            out = VoiOutcome(q, tr, _origin_index(tr, q))
            self.outcomes.append(out)
            self.live[vid] = set()
            try:
                period = initial_active_period(q, self.net)
            except ValueError as exc:
                out.status = "error"
                out.errors.append(str(exc))
                continue
            self.emit(q.report_time, "report", voi=vid, node=q.origin, plate=q.voi.plate_id)
            self.new_branch(vid, q.origin, period, None, {q.voi.plate_id}, q.report_time, "origin")
        while self.queue:
            t, _, kind, payload = heapq.heappop(self.queue)
            getattr(self, "_on_" + kind)(t, *payload)
        return self.finish()

    def _on_activate(self, t, bid):
        br = self.branches[bid]
        if br.status != "pending":
            return
        out = self.outcomes[br.voi_id]
        if out.status == "aborted":
            self._close(br, t, reason="tracking aborted")
            return
        if self.n_branches[br.voi_id] > self.cfg.max_activations:
            # give up on this VoI: the search is not converging
            out.status = "aborted"
            out.errors.append("activation limit reached")
            out.exit_time = t
            self.emit(t, "abort", voi=br.voi_id, node=br.intersection, branch=bid)
            for other in sorted(self.live[br.voi_id] | {bid}):
                self._close(self.branches[other], t, reason="tracking aborted")
            return
        br.status = "active"
        eff = br.effective
        self.emit(t, "activate", voi=br.voi_id, node=br.intersection, branch=bid,
                  parent=br.parent, case=br.case, start=br.period.start, end=br.period.end,
                  suspects=sorted(br.suspects))
        if eff is None:
            self._close(br, t, reason="window already over")
            return
        nf = self.node(br.intersection)
        k0, k1 = nf.frame_range(eff.start, eff.end)
        voi = out.query.voi
        p = self.cfg.period
        for idx, s in sorted(nf.observe(k0, k1).items()):
            plate, visit = nf.visits[idx]
            cand = self.attributes.get(plate)
            if cand is None:
                continue
            outcome = match(s.best, cand, voi)
            if outcome is MatchOutcome.REJECT:
                continue
            depart_at = s.last_frame * p + s.last_bound
            if outcome is MatchOutcome.CONFIRM:
                t_conf = s.best_frame * p + s.best_bound
                self.push(t_conf, "confirm", bid, idx, s)
                depart_at = max(depart_at, t_conf)
            # departure is only observed if the vehicle leaves inside the window
            if visit.leave < eff.end:
                self.push(max(depart_at, t), "depart", bid, idx, outcome.value)
        self.push(eff.end, "end", bid)

    def _alive(self, br: TrackingBranch, t) -> bool:
        return br.status in ("active", "confirmed") and (br.ended_at is None or br.ended_at >= t)

    def _on_confirm(self, t, bid, idx, s: Sighting):
        br = self.branches[bid]
        if br.status != "active" or not self._alive(br, t):
            return
        out = self.outcomes[br.voi_id]
        plate, visit = self.node(br.intersection).visits[idx]
        vi = _visit_index(out, visit)
        out.confirmations.append((vi, br.intersection, t))
        self.emit(t, "confirm", voi=br.voi_id, node=br.intersection, branch=bid, plate=plate,
                  visit=vi, frame=s.best_frame, bound=s.best_bound)
        br.status = "confirmed"
        br.suspects = {plate}
        for other in sorted(self.live[br.voi_id] - {bid}):
            self._close(self.branches[other], t, reason="confirmed elsewhere")
        if visit.leave >= br.period.end:
            # keep watching the identified VoI until it leaves, so that its
            # departure time is known for the next window
            end = visit.leave + self.cfg.period
            br.period = ActivePeriod(br.period.start, end)
            self.emit(t, "extend", voi=br.voi_id, node=br.intersection, branch=bid, end=end)
            self.push(max(visit.leave, t), "depart", bid, idx, MatchOutcome.CONFIRM.value)
            self.push(end, "end", bid)

    def _on_depart(self, t, bid, idx, outcome):
        br = self.branches[bid]
        if not self._alive(br, t):
            return
        plate, visit = self.node(br.intersection).visits[idx]
        out = self.outcomes[br.voi_id]
        if out.status == "aborted":
            return
        is_voi = plate == out.query.voi.plate_id
        if br.status == "confirmed" and not is_voi:
            return
        tr = self.by_plate[plate]
        k = tr.visits.index(visit)
        nxt = tr.visits[k + 1].intersection if k + 1 < len(tr.visits) else None
        x = br.intersection
        if nxt is None or not self.net.has_segment(x, nxt):
            if is_voi and _visit_index(out, visit) >= out.origin_index:
                out.status = "exited monitored area"
                out.exit_time = t
                self.emit(t, "exit", voi=br.voi_id, node=x, branch=bid, plate=plate)
                if br.status == "confirmed":
                    self._close(br, t, reason="voi exited")
            return
        seg = self.net.segment(x, nxt).travel
        dwell_y = self.net.dwell(nxt)
        try:
            d_y = relative_deadline(self.net, nxt)
            if br.status == "confirmed":
                period = propagate_case1(visit.leave, seg, dwell_y, d_y)
                case = "case1"
            else:
                dwell_x = self.net.dwell(x)
                if br.case == "origin":
                    # the VoI may have been reported late in its dwell
                    dwell_x = TravelInterval(0.0, dwell_x.hi)
                period = propagate_case2(br.period, relative_deadline(self.net, x),
                                         dwell_x, seg, dwell_y, d_y,
                                         literal=self.cfg.literal_case2)
                case = "case2"
        except (InvalidPeriod, DeadEnd) as exc:
            out.errors.append(str(exc))
            self.emit(t, "error", voi=br.voi_id, node=nxt, branch=bid, message=str(exc))
            return
        self.emit(t, "depart", voi=br.voi_id, node=x, branch=bid, plate=plate, to=nxt,
                  outcome=outcome)
        key = (bid, nxt, case)
        if key in self.children and self.children[key] in self.live[br.voi_id]:
            self.branches[self.children[key]].suspects.add(plate)
        elif not self._covered(br.voi_id, nxt, period, plate):
            child = self.new_branch(br.voi_id, nxt, period, bid, {plate}, t, case)
            self.children[key] = child.branch_id
            self.emit(t, "spawn", voi=br.voi_id, node=nxt, branch=child.branch_id, parent=bid,
                      case=case, start=period.start, end=period.end)
        if case == "case1":
            # the identified VoI has left; this node is no longer needed for it
            self._close(br, t, reason="voi departed")

    def _covered(self, vid, x, period, plate) -> bool:
        """Fold a request into a live branch at ``x`` whose window already covers it."""
        for bid in sorted(self.live[vid]):
            b = self.branches[bid]
            if b.intersection == x and b.period.contains(period.start, period.end):
                b.suspects.add(plate)
                return True
        return False

    def _on_end(self, t, bid):
        br = self.branches[bid]
        if t < br.period.end - EPS:
            return  # superseded by an extension
        if br.status in ("active", "confirmed") and br.ended_at is None:
            self._close(br, t, reason="window over")

    def _close(self, br: TrackingBranch, t, reason):
        if br.ended_at is not None:
            return
        br.ended_at = t
        if br.status != "confirmed":
            br.status = "terminated"
        self.live[br.voi_id].discard(br.branch_id)
        eff = br.effective
        frames = crowded = 0
        if eff is not None:
            nf = self.node(br.intersection)
            _, frames, crowded = nf.work(*nf.frame_range(eff.start, eff.end))
        self.emit(t, "close", voi=br.voi_id, node=br.intersection, branch=br.branch_id,
                  status=br.status, reason=reason, frames=frames, crowded_frames=crowded)

    def finish(self) -> "TrackingRun":
        node_periods: Dict[IntersectionId, List[ActivePeriod]] = {}
        for vid, out in enumerate(self.outcomes):
            per_node: Dict[IntersectionId, List[ActivePeriod]] = {}
            for b in self.branches:
                if b.voi_id == vid and b.effective is not None:
                    per_node.setdefault(b.intersection, []).append(b.effective)
            out.periods = {x: merge_periods(ps) for x, ps in sorted(per_node.items())}
            out.cost = self._cost(out.periods)
            for x, ps in per_node.items():
                node_periods.setdefault(x, []).extend(ps)
            out.visit_delays, out.censored = _visit_delays(out)
            if out.status == "tracking":
                out.status = "ended"
        node_periods = {x: merge_periods(ps) for x, ps in sorted(node_periods.items())}
        result = TrackingRun(self.events, self.outcomes, node_periods, self.nodes, self.branches)
        result.cost = self._cost(node_periods)
        return result

    def _cost(self, periods: Mapping[IntersectionId, List[ActivePeriod]]) -> float:
        total = 0.0
        for x, ps in periods.items():
            nf = self.node(x)
            for p in ps:
                total += nf.work(*nf.frame_range(p.start, p.end))[0]
        return total


def _visit_index(out: VoiOutcome, visit: Visit) -> int:
    try:
        return out.trajectory.visits.index(visit)
    except ValueError:
        return -1


def _visit_delays(out: VoiOutcome) -> Tuple[List[float], int]:
    """Per visit: arrival until the first later confirmation completes.

    Visits never followed by a confirmation are censored at the VoI's exit
    from the monitored area (or when tracking was aborted), a lower bound on
    their real delay. Returns (delays, number censored).
    """
    first: Dict[int, float] = {}
    for vi, _, t in out.confirmations:
        if vi >= 0 and (vi not in first or t < first[vi]):
            first[vi] = t
    delays = []
    censored = 0
    visits = out.trajectory.visits
    for k in range(out.origin_index, len(visits)):
        later = [t for vi, t in first.items() if vi >= k]
        arrive = visits[k].enter
        if k == out.origin_index:
            arrive = max(arrive, out.query.report_time)
        if later:
            delays.append(min(later) - arrive)
        elif out.exit_time is not None and arrive <= out.exit_time:
            delays.append(out.exit_time - arrive)
            censored += 1
        else:
            break
    return delays, censored


def run(net: RoadNetwork, trajectories: Sequence[Trajectory],
        attributes: Mapping[str, VehicleAttributes], queries: Sequence[VoiQuery],
        cfg: TrackerConfig = TrackerConfig(), frame_cache: Optional[dict] = None) -> TrackingRun:
    """Track every query's VoI through the network.

    Raises :class:`~edgetrack.rt_control.NodeOverloaded` when some node
    cannot afford colour matching for every vehicle in a frame.
    ``frame_cache`` may be shared between runs over the same traffic and
    network to avoid rebuilding per-node frame timelines.
    """
    return _Runner(net, trajectories, attributes, queries, cfg, frame_cache).run()


def no_tracking_loss_check(result: TrackingRun, voi: int = 0,
                           trajectory: Optional[Trajectory] = None) -> bool:
    """True iff every visit of the VoI after its report lies inside one of its
    activation windows at that intersection, and every frame that saw it
    there met the node's deadline."""
    out = result.outcomes[voi]
    tr = trajectory or out.trajectory
    start = out.origin_index
    for k in range(start, len(tr.visits)):
        v = tr.visits[k]
        enter = max(v.enter, out.query.report_time) if k == start else v.enter
        window = next((p for p in out.periods.get(v.intersection, ())
                       if p.contains(enter, v.leave)), None)
        if window is None:
            return False
        nf = result.node_frames.get(v.intersection)
        if nf is None:
            return False
        idx = next((i for i in nf.by_plate.get(tr.plate_id, ()) if nf.visits[i][1] == v), None)
        if idx is None:
            continue
        k0, k1 = nf.frame_range(max(enter, window.start), min(v.leave, window.end))
        for _, _, present in nf.segments(k0, k1):
            if idx not in present:
                continue
            plan = nf.plan(len(present))
            execs = [nf.cfg.profile.cost(plan.granularity(i)) for i in range(len(present))]
            ts = TaskSet.from_exec_times(execs, nf.cfg.period, nf.cfg.processors)
            if completion_bound(ts, present.index(idx)) > nf.deadline + EPS:
                return False
    return True
