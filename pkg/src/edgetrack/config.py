"""Scenario files: YAML describing traffic, VoI selection and edge nodes.

Example::

    seed: 3
    date: 2012-01-01
    timezone: Asia/Shanghai
    start_h: 0
    duration_h: 24
    traffic:
      preset: residential      # or a list of 24 hourly multipliers
      targets: calibrated      # or a number, or {intersection: veh/min}
      hops: [3, 10]
    voi:
      count: 1
      hours: [7, 8, 18]        # default: every hour in the scenario
      repetitions: 8
      overlap: true
    edge:
      processors: 20
      fps: 24
      profile_ms: {color: 0.5, model: 40.6, full: 310.1}  # per module
      case2: predecessor       # or literal
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from datetime import date, datetime, time
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

import yaml

from .reid_model import CascadeProfile
from .road_network import RoadNetwork
from .tracker import TrackerConfig
from .traffic_gen import (RATE_PRESETS, ConfigError, ScenarioConfig, VoiSpec,
                          calibrated_targets)

_TOP = {"seed", "date", "timezone", "start_h", "duration_h", "traffic", "voi", "edge"}
_TRAFFIC = {"preset", "targets", "hops", "trajectories"}
_VOI = {"count", "hours", "repetitions", "overlap", "overlap_window_s", "min_visits"}
_EDGE = {"processors", "fps", "profile_ms", "case2", "max_activations"}


@dataclass(frozen=True)
class Scenario:
    seed: int = 0
    day: date = date(2012, 1, 1)
    timezone: str = "UTC"
    start_h: int = 0
    duration_h: int = 24
    preset: Tuple[float, ...] = tuple(RATE_PRESETS["flat"])
    targets: Any = "calibrated"
    hops: Tuple[int, int] = (3, 10)
    trajectories: Optional[str] = None
    voi_count: int = 1
    hours: Optional[Tuple[int, ...]] = None
    repetitions: int = 4
    overlap: bool = True
    overlap_window: float = 300.0
    min_visits: int = 3
    processors: int = 20
    fps: float = 24.0
    profile_ms: Tuple[float, float, float] = (0.5, 40.6, 310.1)
    case2: str = "predecessor"
    max_activations: int = 2000
    raw: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def start(self) -> float:
        zone = ZoneInfo(self.timezone)
        midnight = datetime.combine(self.day, time(0), zone)
        return midnight.timestamp() + 3600.0 * self.start_h

    @property
    def duration(self) -> float:
        return 3600.0 * self.duration_h

    def hour_slots(self) -> List[Tuple[int, float]]:
        """(local hour of day, slot start epoch) for every evaluated hour."""
        wanted = None if self.hours is None else set(self.hours)
        out = []
        for k in range(self.duration_h):
            h = (self.start_h + k) % 24
            if wanted is None or h in wanted:
                out.append((h, self.start + 3600.0 * k))
        return out

    def tracker_config(self) -> TrackerConfig:
        return TrackerConfig(profile=CascadeProfile.from_ms(*self.profile_ms),
                             processors=self.processors, period=1.0 / self.fps,
                             literal_case2=self.case2 == "literal",
                             max_activations=self.max_activations)

    def voi_spec(self) -> VoiSpec:
        return VoiSpec(count=self.voi_count, overlap=self.overlap,
                       overlap_window=self.overlap_window, min_visits=self.min_visits)

    def traffic_config(self, net: RoadNetwork) -> ScenarioConfig:
        if self.targets == "calibrated":
            targets = calibrated_targets(net, self.seed)
        elif isinstance(self.targets, (int, float)):
            targets = {x: float(self.targets) for x in net.ids()}
        else:
            targets = {int(k): float(v) for k, v in self.targets.items()}
        return ScenarioConfig(seed=self.seed, start=self.start, duration=self.duration,
                              timezone=self.timezone, targets=targets,
                              hourly=list(self.preset), hops=self.hops,
                              voi=self.voi_spec())

    def canonical(self) -> Dict[str, Any]:
        return {
            "seed": self.seed, "date": self.day.isoformat(), "timezone": self.timezone,
            "start_h": self.start_h, "duration_h": self.duration_h,
            "traffic": {"preset": list(self.preset), "targets": self.targets,
                        "hops": list(self.hops), "trajectories": self.trajectories},
            "voi": {"count": self.voi_count,
                    "hours": None if self.hours is None else list(self.hours),
                    "repetitions": self.repetitions, "overlap": self.overlap,
                    "overlap_window_s": self.overlap_window, "min_visits": self.min_visits},
            "edge": {"processors": self.processors, "fps": self.fps,
                     "profile_ms": dict(zip(("color", "model", "full"), self.profile_ms)),
                     "case2": self.case2, "max_activations": self.max_activations},
        }

    def config_hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "Scenario":
        return replace(self, **kw)


def _section(data: Mapping, key: str, allowed: set) -> Mapping:
    sec = data.get(key) or {}
    if not isinstance(sec, Mapping):
        raise ConfigError(f"'{key}' must be a mapping")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{key}': {sorted(unknown)}")
    return sec


def parse_scenario(data: Mapping[str, Any]) -> Scenario:
    if not isinstance(data, Mapping):
        raise ConfigError("scenario must be a mapping")
    unknown = set(data) - _TOP
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    traffic = _section(data, "traffic", _TRAFFIC)
    voi = _section(data, "voi", _VOI)
    edge = _section(data, "edge", _EDGE)
    kw: Dict[str, Any] = {"raw": dict(data)}
    try:
        kw["seed"] = int(data.get("seed", 0))
        d = data.get("date", "2012-01-01")
        kw["day"] = d if isinstance(d, date) else date.fromisoformat(str(d))
        kw["timezone"] = str(data.get("timezone", "UTC"))
        ZoneInfo(kw["timezone"])
        kw["start_h"] = int(data.get("start_h", 0))
        kw["duration_h"] = int(data.get("duration_h", 24))

        preset = traffic.get("preset", "flat")
        if isinstance(preset, str):
            if preset not in RATE_PRESETS:
                raise ConfigError(f"unknown traffic preset {preset!r}; "
                                  f"choose from {sorted(RATE_PRESETS)}")
            preset = RATE_PRESETS[preset]
        kw["preset"] = tuple(float(v) for v in preset)
        targets = traffic.get("targets", "calibrated")
        if isinstance(targets, Mapping):
            targets = {int(k): float(v) for k, v in sorted(targets.items())}
        elif targets != "calibrated":
            targets = float(targets)
        kw["targets"] = targets
        kw["hops"] = tuple(int(v) for v in traffic.get("hops", (3, 10)))
        if traffic.get("trajectories") is not None:
            kw["trajectories"] = str(traffic["trajectories"])

        kw["voi_count"] = int(voi.get("count", 1))
        if voi.get("hours") is not None:
            kw["hours"] = tuple(sorted({int(h) for h in voi["hours"]}))
        kw["repetitions"] = int(voi.get("repetitions", 4))
        kw["overlap"] = bool(voi.get("overlap", True))
        kw["overlap_window"] = float(voi.get("overlap_window_s", 300.0))
        kw["min_visits"] = int(voi.get("min_visits", 3))

        kw["processors"] = int(edge.get("processors", 20))
        kw["fps"] = float(edge.get("fps", 24.0))
        prof = edge.get("profile_ms") or {}
        kw["profile_ms"] = (float(prof.get("color", 0.5)), float(prof.get("model", 40.6)),
                            float(prof.get("full", 310.1)))
        kw["case2"] = str(edge.get("case2", "predecessor"))
        kw["max_activations"] = int(edge.get("max_activations", 2000))
    except ZoneInfoNotFoundError:
        raise ConfigError(f"unknown timezone {data.get('timezone')!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad scenario value: {exc}") from None
    sc = Scenario(**kw)
    errs = check(sc)
    if errs:
        raise ConfigError("; ".join(errs))
    return sc


def check(sc: Scenario) -> List[str]:
    errs = []
    if not 0 <= sc.start_h < 24:
        errs.append("start_h must be in [0, 24)")
    if sc.duration_h < 1:
        errs.append("duration_h must be >= 1")
    if len(sc.preset) != 24:
        errs.append("traffic preset needs 24 hourly values")
    if len(sc.hops) != 2 or not 1 <= sc.hops[0] <= sc.hops[1]:
        errs.append("hops must be [min, max] with 1 <= min <= max")
    if sc.hours is not None and any(not 0 <= h < 24 for h in sc.hours):
        errs.append("voi.hours must be in [0, 24)")
    if sc.voi_count < 1 or sc.repetitions < 1:
        errs.append("voi.count and voi.repetitions must be >= 1")
    if sc.processors < 1 or sc.fps <= 0:
        errs.append("edge.processors and edge.fps must be positive")
    c, m, f = sc.profile_ms
    if min(c, m, f) <= 0:
        errs.append("profile_ms values must be positive")
    if sc.case2 not in ("predecessor", "literal"):
        errs.append("edge.case2 must be 'predecessor' or 'literal'")
    return errs


def load_scenario(path) -> Scenario:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return parse_scenario(data or {})
