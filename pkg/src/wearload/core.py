"""Shared domain types for the workload pipeline.

All series are stored as read-only numpy arrays so that sessions can be
handed to worker processes without defensive copies.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

RR_MIN_MS = 200
RR_MAX_MS = 3000
MAX_SESSION_MS = 3_600_000
ACCEL_RATE_HZ = 20.0

TLX_FACTORS = ("mental", "physical", "temporal", "performance", "effort", "frustration")
TLX_PAIRS = tuple(combinations(TLX_FACTORS, 2))

FEATURE_NAMES = (
    "meanRR", "SDNN", "RMSSD", "pNN50", "triangular_index", "TINN",
    "LF", "HF", "LF_HF", "VLF", "SDSD",
    "meanX", "meanY", "meanZ", "meanMag", "stdX", "stdY", "stdZ", "energy",
)
HRV_NAMES = FEATURE_NAMES[:11]
ACCEL_NAMES = FEATURE_NAMES[11:]

FEATURE_UNITS = {
    "meanRR": "ms", "SDNN": "ms", "RMSSD": "ms", "pNN50": "%",
    "triangular_index": "1", "TINN": "ms", "LF": "ms^2", "HF": "ms^2",
    "LF_HF": "1", "VLF": "ms^2", "SDSD": "ms",
    "meanX": "accel", "meanY": "accel", "meanZ": "accel", "meanMag": "accel",
    "stdX": "accel", "stdY": "accel", "stdZ": "accel", "energy": "accel^2",
}


class Label(IntEnum):
    LOW = 0
    HIGH = 1


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RrSeries:
    """Beat-to-beat intervals; ``t_ms[i]`` is the time of the beat that ends ``rr_ms[i]``."""

    t_ms: np.ndarray
    rr_ms: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t_ms", _frozen(self.t_ms))
        object.__setattr__(self, "rr_ms", _frozen(self.rr_ms))
        if self.t_ms.shape != self.rr_ms.shape:
            raise ValueError("t_ms and rr_ms must have equal length")

    def __len__(self):
        return len(self.t_ms)

    def __eq__(self, other):
        return (isinstance(other, RrSeries)
                and np.array_equal(self.t_ms, other.t_ms)
                and np.array_equal(self.rr_ms, other.rr_ms))

    def to_dict(self):
        return {"t_ms": self.t_ms.tolist(), "rr_ms": self.rr_ms.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["t_ms"], d["rr_ms"])


@dataclass(frozen=True, eq=False)
class AccelSeries:
    t_ms: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    unit: str = "g"

    def __post_init__(self):
        for name in ("t_ms", "x", "y", "z"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = len(self.t_ms)
        if not (len(self.x) == len(self.y) == len(self.z) == n):
            raise ValueError("accel columns must have equal length")

    def __len__(self):
        return len(self.t_ms)

    def __eq__(self, other):
        return (isinstance(other, AccelSeries) and self.unit == other.unit
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("t_ms", "x", "y", "z")))

    def slice(self, start_ms, end_ms) -> "AccelSeries":
        lo, hi = np.searchsorted(self.t_ms, [start_ms, end_ms], side="left")
        return AccelSeries(self.t_ms[lo:hi], self.x[lo:hi], self.y[lo:hi],
                           self.z[lo:hi], self.unit)

    def to_dict(self):
        return {"t_ms": self.t_ms.tolist(), "x": self.x.tolist(),
                "y": self.y.tolist(), "z": self.z.tolist(), "unit": self.unit}

    @classmethod
    def from_dict(cls, d):
        return cls(d["t_ms"], d["x"], d["y"], d["z"], d.get("unit", "g"))


@dataclass(frozen=True)
class TlxResponse:
    """Six 0-100 ratings plus the 15 pairwise "which mattered more" answers.

    ``comparisons`` holds ``(a, b, winner)`` triples using names from
    ``TLX_FACTORS``. An empty tuple is allowed only for raw-TLX scoring.
    """

    ratings: tuple
    comparisons: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "ratings", tuple(float(r) for r in self.ratings))
        object.__setattr__(self, "comparisons",
                           tuple(tuple(c) for c in self.comparisons))

    def violations(self, require_comparisons=True) -> list[str]:
        out = []
        if len(self.ratings) != 6:
            out.append(f"tlx ratings count {len(self.ratings)} != 6")
        for i, r in enumerate(self.ratings):
            if not (0.0 <= r <= 100.0):
                out.append(f"tlx rating out of range @{i}")
        if not self.comparisons and not require_comparisons:
            return out
        if len(self.comparisons) != 15:
            out.append(f"tlx comparisons count {len(self.comparisons)} != 15")
        seen = set()
        for i, c in enumerate(self.comparisons):
            if len(c) != 3:
                out.append(f"tlx comparison malformed @{i}")
                continue
            a, b, w = c
            pair = frozenset((a, b))
            if a not in TLX_FACTORS or b not in TLX_FACTORS or a == b:
                out.append(f"tlx comparison unknown pair @{i}")
            elif w not in (a, b):
                out.append(f"tlx comparison winner not in pair @{i}")
            if pair in seen:
                out.append(f"tlx comparison duplicate pair @{i}")
            seen.add(pair)
        return out

    def to_dict(self):
        return {"ratings": list(self.ratings),
                "comparisons": [{"a": a, "b": b, "winner": w} for a, b, w in self.comparisons]}

    @classmethod
    def from_dict(cls, d):
        comps = [(c["a"], c["b"], c["winner"]) for c in d.get("comparisons", [])]
        return cls(tuple(d["ratings"]), tuple(comps))


@dataclass(frozen=True)
class Session:
    id: str
    participant_id: str
    duration_ms: int
    rr: RrSeries
    accel: AccelSeries
    tlx: Optional[TlxResponse] = None
    tlx_delay_min: Optional[float] = None

    def to_dict(self):
        return {
            "id": self.id, "participant_id": self.participant_id,
            "duration_ms": self.duration_ms, "rr": self.rr.to_dict(),
            "accel": self.accel.to_dict(),
            "tlx": None if self.tlx is None else self.tlx.to_dict(),
            "tlx_delay_min": self.tlx_delay_min,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            id=d["id"], participant_id=d["participant_id"],
            duration_ms=int(d["duration_ms"]),
            rr=RrSeries.from_dict(d["rr"]), accel=AccelSeries.from_dict(d["accel"]),
            tlx=None if d.get("tlx") is None else TlxResponse.from_dict(d["tlx"]),
            tlx_delay_min=d.get("tlx_delay_min"),
        )


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """The 19 window features in ``FEATURE_NAMES`` order."""

    values: np.ndarray
    names: tuple = field(default=FEATURE_NAMES)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if len(self.values) != len(self.names):
            raise ValueError("feature vector length does not match names")

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])

    def __eq__(self, other):
        return (isinstance(other, FeatureVector) and self.names == other.names
                and np.array_equal(self.values, other.values))

    def violations(self) -> list[str]:
        out = []
        if not np.all(np.isfinite(self.values)):
            out.append("non-finite feature value")
        if self.names == FEATURE_NAMES:
            if not 0.0 <= self["pNN50"] <= 100.0:
                out.append("pNN50 out of range")
            for band in ("LF", "HF", "VLF"):
                if self[band] < 0:
                    out.append(f"{band} negative")
        return out

    def to_dict(self):
        return dict(zip(self.names, self.values.tolist()))

    @classmethod
    def from_dict(cls, d):
        names = tuple(d)
        return cls(np.array([d[n] for n in names]), names)


def _monotone_violations(t: np.ndarray, what: str) -> list[str]:
    bad = np.flatnonzero(np.diff(t) <= 0) + 1
    return [f"{what} t_ms not strictly increasing @{i}" for i in bad]


def validate_session(s: Session, require_comparisons: bool = True) -> list[str]:
    """Return human-readable violations of the core invariants (empty if valid)."""
    out = []
    if s.duration_ms > MAX_SESSION_MS:
        out.append(f"duration_ms {s.duration_ms} exceeds {MAX_SESSION_MS}")
    if s.duration_ms <= 0:
        out.append("duration_ms must be positive")
    if len(s.rr) == 0:
        out.append("rr empty")
    rr = s.rr.rr_ms
    for i in np.flatnonzero(~((rr >= RR_MIN_MS) & (rr <= RR_MAX_MS))):
        out.append(f"rr_ms out of range @{i}")
    out += _monotone_violations(s.rr.t_ms, "rr")
    for i in np.flatnonzero((s.rr.t_ms < 0) | (s.rr.t_ms > s.duration_ms)):
        out.append(f"rr t_ms outside session @{i}")
    out += _monotone_violations(s.accel.t_ms, "accel")
    for i in np.flatnonzero((s.accel.t_ms < 0) | (s.accel.t_ms > s.duration_ms)):
        out.append(f"accel t_ms outside session @{i}")
    if s.tlx is not None:
        out += s.tlx.violations(require_comparisons)
    return out
