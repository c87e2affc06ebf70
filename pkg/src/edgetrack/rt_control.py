"""Periodic ReID task sets on an M-processor edge node under global FIFO.

Every detected vehicle in a frame is one periodic task. All tasks share the
camera period ``p`` and are released together at each frame boundary.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence

from .reid_model import CascadeProfile, Granularity

DEFAULT_PERIOD = 1.0 / 24.0
DEFAULT_PROCESSORS = 20


class InfeasibleTaskSet(ValueError):
    pass


class NodeOverloaded(RuntimeError):
    """Even colour-only matching of every detected vehicle misses the deadline."""


@dataclass(frozen=True)
class RtTask:
    task_id: int
    exec_time: float
    period: float

    def __post_init__(self):
        if self.exec_time <= 0 or self.period <= 0:
            raise ValueError("exec_time and period must be positive")

    @property
    def utilization(self) -> float:
        return self.exec_time / self.period


@dataclass(frozen=True)
class TaskSet:
    tasks: tuple
    processors: int

    def __post_init__(self):
        if self.processors < 1:
            raise ValueError("processors must be >= 1")
        periods = {t.period for t in self.tasks}
        if len(periods) > 1:
            raise ValueError("all tasks must share one period")
        if self.total_utilization > self.processors + 1e-12:
            raise InfeasibleTaskSet(
                f"U_sum={self.total_utilization:.4f} exceeds M={self.processors}")

    @classmethod
    def from_exec_times(cls, exec_times: Sequence[float], period: float,
                        processors: int) -> "TaskSet":
        tasks = tuple(RtTask(i, float(e), period) for i, e in enumerate(exec_times))
        return cls(tasks, processors)

    @property
    def period(self) -> float:
        return self.tasks[0].period if self.tasks else DEFAULT_PERIOD

    @property
    def exec_times(self) -> List[float]:
        return [t.exec_time for t in self.tasks]

    @property
    def total_utilization(self) -> float:
        return sum(t.utilization for t in self.tasks)


@dataclass
class BoundReport:
    bounds: List[float]
    raw_bounds: List[float]
    deadline: Optional[float] = None
    feasible: bool = field(init=False)

    def __post_init__(self):
        finite = all(math.isfinite(b) for b in self.bounds)
        if self.deadline is None:
            self.feasible = finite
        else:
            self.feasible = finite and all(b <= self.deadline for b in self.bounds)


def _interference(exec_times: Sequence[float], period: float, m: int):
    """Sum of the (M-1) largest costs and the (M-1) largest utilizations."""
    k = min(m - 1, len(exec_times))
    top = sorted(exec_times, reverse=True)[:k]
    e_sum = sum(top)
    # utilizations share a period, so the largest-u tasks are the largest-e tasks
    u_sum = e_sum / period
    return e_sum, u_sum


def _eq1(e_i, e_sum, u_sum, period, m):
    denom = m - u_sum
    if denom <= 0:
        return math.inf
    return period + e_i + max(e_sum - e_i, 0.0) / denom


def raw_completion_bound(ts: TaskSet, i: int) -> float:
    """The global-FIFO completion bound without the dedicated-processor cap."""
    e_sum, u_sum = _interference(ts.exec_times, ts.period, ts.processors)
    return _eq1(ts.tasks[i].exec_time, e_sum, u_sum, ts.period, ts.processors)


def completion_bound(ts: TaskSet, i: int) -> float:
    """Upper bound on the release-to-completion time of task ``i``'s jobs.

    With no more tasks than processors every task owns a processor, and the
    bound is capped at ``p + e_i``.
    """
    raw = raw_completion_bound(ts, i)
    if len(ts.tasks) <= ts.processors:
        return min(raw, ts.period + ts.tasks[i].exec_time)
    return raw


def bound_report(ts: TaskSet, deadline: Optional[float] = None) -> BoundReport:
    e_sum, u_sum = _interference(ts.exec_times, ts.period, ts.processors)
    raw = [_eq1(t.exec_time, e_sum, u_sum, ts.period, ts.processors) for t in ts.tasks]
    if len(ts.tasks) <= ts.processors:
        capped = [min(r, ts.period + t.exec_time) for r, t in zip(raw, ts.tasks)]
    else:
        capped = list(raw)
    return BoundReport(capped, raw, deadline)


# --- admission control -----------------------------------------------------

def _mixed_bounds(n, k, lo, hi, period, m):
    """Bounds for ``k`` tasks at cost ``hi`` followed by ``n - k`` at ``lo``.

    Returns (bound of a hi task, bound of a lo task, U_sum). Avoids building
    a TaskSet on the hot path; agrees with :func:`completion_bound`.
    """
    top = min(m - 1, n)
    n_hi_top = min(k, top)
    e_sum = n_hi_top * hi + (top - n_hi_top) * lo
    u_sum = e_sum / period
    total_u = (k * hi + (n - k) * lo) / period
    r_hi = _eq1(hi, e_sum, u_sum, period, m) if k > 0 else 0.0
    r_lo = _eq1(lo, e_sum, u_sum, period, m) if k < n else 0.0
    if n <= m:
        r_hi = min(r_hi, period + hi) if k > 0 else 0.0
        r_lo = min(r_lo, period + lo) if k < n else 0.0
    return r_hi, r_lo, total_u


def _admissible(n, k, lo, hi, period, m, deadline) -> bool:
    r_hi, r_lo, total_u = _mixed_bounds(n, k, lo, hi, period, m)
    if total_u > m + 1e-12:
        return False
    return max(r_hi, r_lo) <= deadline


def _max_upgrades(n, lo, hi, period, m, deadline) -> int:
    # Bounds are monotone in every cost, so admissible k form a prefix [0, k*].
    lo_k, hi_k = 0, n
    while lo_k < hi_k:
        mid = (lo_k + hi_k + 1) // 2
        if _admissible(n, mid, lo, hi, period, m, deadline):
            lo_k = mid
        else:
            hi_k = mid - 1
    return lo_k


@dataclass(frozen=True)
class Admission:
    """Granularity plan for one frame: task ids below ``n_model`` run at least
    model/make matching, and ids below ``n_full`` run the full cascade."""

    n: int
    n_model: int
    n_full: int

    def granularity(self, task_id: int) -> Granularity:
        if task_id < self.n_full:
            return Granularity.FULL
        if task_id < self.n_model:
            return Granularity.MODEL_MAKE
        return Granularity.COLOR

    def assignment(self) -> List[Granularity]:
        return [self.granularity(i) for i in range(self.n)]

    @property
    def crowded(self) -> bool:
        return self.n_full < self.n

    def exec_times(self, profile: CascadeProfile) -> List[float]:
        return [profile.cost(g) for g in self.assignment()]


@lru_cache(maxsize=65536)
def plan_admission(n: int, profile: CascadeProfile, processors: int, period: float,
                   deadline: float) -> Admission:
    if n < 1:
        raise ValueError("admission control needs at least one task")
    if not _admissible(n, 0, profile.e1, profile.e1, period, processors, deadline):
        raise NodeOverloaded("edge node overloaded beyond model assumptions: "
                             f"{n} colour-only tasks miss D={deadline}")
    k1 = _max_upgrades(n, profile.e1, profile.e2, period, processors, deadline)
    if k1 < n:
        return Admission(n, k1, 0)
    k2 = _max_upgrades(n, profile.e2, profile.e3, period, processors, deadline)
    return Admission(n, n, k2)


def admission_control(n: int, profile: CascadeProfile, processors: int = DEFAULT_PROCESSORS,
                      period: float = DEFAULT_PERIOD, deadline: float = 30.0) -> List[Granularity]:
    """Per-task granularity maximizing total execution time subject to R_i <= D.

    First upgrade as many tasks as possible from colour to model/make
    matching; only when all of them fit, upgrade as many as possible to the
    full cascade. Upgrades go to the lowest task ids.
    """
    return plan_admission(n, profile, processors, period, deadline).assignment()


# --- FIFO simulation ---------------------------------------------------------

def fifo_simulate(ts: TaskSet, horizon: float, sequential_jobs: bool = False) -> List[float]:
    """Worst observed response time per task under global non-preemptive FIFO.

    Jobs of all tasks are released together every period and dispatched in
    release order, ties broken by task id, each to the earliest-free
    processor. With ``sequential_jobs`` a job also waits for its
    predecessor of the same task to finish.

    Simulation stops early once the backlog state seen at a frame boundary
    repeats, since the schedule is periodic from then on.
    """
    n = len(ts.tasks)
    m = ts.processors
    p = ts.period
    frames = max(1, int(math.floor(horizon / p + 1e-9)))
    free = [0.0] * m
    last_finish = [0.0] * n
    worst = [0.0] * n
    seen = set()
    order = sorted(range(n), key=lambda i: ts.tasks[i].task_id)
    for k in range(frames):
        r = k * p
        for i in order:
            t0 = heapq.heappop(free)
            start = max(t0, r)
            if sequential_jobs and last_finish[i] > start:
                start = last_finish[i]
            finish = start + ts.tasks[i].exec_time
            heapq.heappush(free, finish)
            last_finish[i] = finish
            if finish - r > worst[i]:
                worst[i] = finish - r
        nxt = r + p
        state = tuple(sorted(round(max(f - nxt, 0.0), 9) for f in free))
        if sequential_jobs:
            state += tuple(round(max(f - nxt, 0.0), 9) for f in last_finish)
        if state in seen:
            break
        seen.add(state)
    return worst
