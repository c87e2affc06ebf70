"""Cost and matching model for the three-stage vehicle ReID cascade.

No image processing happens here. Each stage is reduced to a fixed
per-vehicle inference time and a deterministic attribute comparison.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional


class Granularity(enum.IntEnum):
    COLOR = 1
    MODEL_MAKE = 2
    FULL = 3


class MatchOutcome(enum.Enum):
    REJECT = "reject"
    SUSPECT = "suspect"
    CONFIRM = "confirm"


@dataclass(frozen=True)
class ReidModuleSpec:
    granularity: Granularity
    inference_time: float  # seconds
    flops: Optional[float] = None
    cpu_usage: Optional[float] = None

    def __post_init__(self):
        if self.inference_time <= 0:
            raise ValueError("inference_time must be positive")


# Per-module costs on one 224x224 bounding box (AMD Ryzen 7 3700x).
COLOR_MODULE = ReidModuleSpec(Granularity.COLOR, 0.5e-3, None, 0.003)
MODEL_MODULE = ReidModuleSpec(Granularity.MODEL_MAKE, 40.6e-3, 341.5e6, 0.022)
FULL_MODULE = ReidModuleSpec(Granularity.FULL, 310.1e-3, 19602.3e6, 0.273)

# Feature extractors inside the full module; metadata only.
FEATURE_EXTRACTORS = {
    "global": {"flops": 341.5e6, "inference_time": 41.1e-3, "cpu_usage": 0.024},
    "region": {"flops": 7868.4e6, "inference_time": 96.7e-3, "cpu_usage": 0.098},
    "key_point": {"flops": 11392e6, "inference_time": 172.3e-3, "cpu_usage": 0.150},
}


@dataclass(frozen=True)
class CascadeProfile:
    """Cumulative execution time (seconds) of each granularity.

    Selecting a finer stage implies running every coarser one first, so
    ``e2 = e1 + model`` and ``e3 = e2 + full``.
    """

    e1: float
    e2: float
    e3: float

    def __post_init__(self):
        if not (0 < self.e1 < self.e2 < self.e3):
            raise ValueError(
                f"cascade costs must satisfy 0 < e1 < e2 < e3, got {self.e1}, {self.e2}, {self.e3}"
            )

    @classmethod
    def from_modules(cls, color: ReidModuleSpec = COLOR_MODULE,
                     model: ReidModuleSpec = MODEL_MODULE,
                     full: ReidModuleSpec = FULL_MODULE) -> "CascadeProfile":
        e1 = color.inference_time
        e2 = e1 + model.inference_time
        return cls(e1, e2, e2 + full.inference_time)

    @classmethod
    def from_ms(cls, color_ms: float, model_ms: float, full_ms: float) -> "CascadeProfile":
        """Build from per-module (not cumulative) times in milliseconds."""
        e1 = color_ms / 1000.0
        e2 = e1 + model_ms / 1000.0
        return cls(e1, e2, e2 + full_ms / 1000.0)

    def cost(self, g: Granularity) -> float:
        return (self.e1, self.e2, self.e3)[int(g) - 1]

    def as_ms(self) -> dict:
        return {"e1": self.e1 * 1e3, "e2": self.e2 * 1e3, "e3": self.e3 * 1e3}


DEFAULT_PROFILE = CascadeProfile.from_modules()


def cumulative_cost(profile: CascadeProfile, g: Granularity) -> float:
    return profile.cost(g)


@dataclass(frozen=True)
class VehicleAttributes:
    plate_id: str
    color: str
    make_model: str
    identity: str = field(default="")

    def __post_init__(self):
        if not self.identity:
            object.__setattr__(self, "identity", self.plate_id)


def match(g: Granularity, candidate: VehicleAttributes, voi: VehicleAttributes) -> MatchOutcome:
    if candidate.color != voi.color:
        return MatchOutcome.REJECT
    if g == Granularity.COLOR:
        return MatchOutcome.SUSPECT
    if candidate.make_model != voi.make_model:
        return MatchOutcome.REJECT
    if g == Granularity.MODEL_MAKE:
        return MatchOutcome.SUSPECT
    if candidate.identity == voi.identity:
        return MatchOutcome.CONFIRM
    return MatchOutcome.REJECT
