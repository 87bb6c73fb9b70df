"""RR artifact detection, spline repair, tachogram resampling and windowing."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .core import AccelSeries, RrSeries, Session
from .ingest import QualityReport

log = logging.getLogger(__name__)

WINDOW_MS = 120_000
STRIDE_MS = 60_000
HARD_GAP_MS = 5_000


class CleanError(Exception):
    pass


class TooFewValidSamples(CleanError):
    pass


class SpanNotCovered(CleanError):
    pass


class SessionTooShort(CleanError):
    pass


@dataclass(frozen=True, eq=False)
class ArtifactMask:
    flags: np.ndarray
    local_avgs: np.ndarray

    @property
    def count(self):
        return int(self.flags.sum())


@dataclass(frozen=True, eq=False)
class Window:
    index: int
    start_ms: int
    end_ms: int
    rr_clean: np.ndarray
    tachogram: np.ndarray
    accel_slice: AccelSeries
    interpolated_fraction: float


def detect_artifacts(rr: RrSeries, window_pts: int = 10, threshold: float = 0.20) -> ArtifactMask:
    """Flag beats deviating by more than ``threshold`` from the causal local average.

    The reference is the mean of the last ``window_pts`` unflagged beats, so an
    artifact never contaminates its own reference. The first beat has no
    reference and is never flagged.
    """
    values = rr.rr_ms
    n = len(values)
    if n == 0:
        raise ValueError("empty RR series")
    flags = np.zeros(n, dtype=bool)
    avgs = np.empty(n)
    hist = deque(maxlen=window_pts)
    for i in range(n):
        v = float(values[i])
        if hist:
            avg = sum(hist) / len(hist)
            avgs[i] = avg
            if abs(v - avg) / avg > threshold:
                flags[i] = True
        else:
            avgs[i] = v
        if not flags[i]:
            hist.append(v)
    flags.setflags(write=False)
    avgs.setflags(write=False)
    return ArtifactMask(flags, avgs)


def _segments(t: np.ndarray, gap_ms: float = HARD_GAP_MS):
    cuts = np.flatnonzero(np.diff(t) > gap_ms) + 1
    bounds = np.concatenate([[0], cuts, [len(t)]])
    return list(zip(bounds[:-1], bounds[1:]))


def _spline_fill(t_knots, v_knots, t_eval):
    """Natural cubic spline through the knots, held flat beyond them."""
    if len(t_knots) == 1:
        return np.full(len(t_eval), v_knots[0], dtype=float)
    te = np.clip(t_eval, t_knots[0], t_knots[-1])
    if len(t_knots) < 4:
        return np.interp(te, t_knots, v_knots)
    return CubicSpline(t_knots, v_knots, bc_type="natural")(te)


def repair(rr: RrSeries, mask: ArtifactMask,
           gap_ms: float = HARD_GAP_MS) -> tuple[RrSeries, QualityReport]:
    """Replace flagged beats with natural-spline values through the clean ones.

    Splines never bridge a hard gap: each gap-free segment gets its own fit.
    Timestamps are preserved.
    """
    flags = np.asarray(mask.flags, dtype=bool)
    total = len(flags)
    n_valid = int((~flags).sum())
    if n_valid < 4:
        raise TooFewValidSamples(f"{n_valid} unflagged samples, need 4")
    t = rr.t_ms
    out = np.array(rr.rr_ms, dtype=float)
    for lo, hi in _segments(t, gap_ms):
        seg_flags = flags[lo:hi]
        if not seg_flags.any():
            continue
        good = np.flatnonzero(~seg_flags) + lo
        bad = np.flatnonzero(seg_flags) + lo
        if good.size == 0:
            # whole segment corrupt; windows over it are excluded anyway
            continue
        out[bad] = _spline_fill(t[good], rr.rr_ms[good], t[bad])
    q = QualityReport(valid_fraction=n_valid / total, artifact_count=total - n_valid,
                      total_rr=total)
    return RrSeries(t, out), q


def resample_tachogram(repaired: RrSeries, rate_hz: float = 4.0,
                       span: Optional[tuple] = None,
                       gap_ms: float = HARD_GAP_MS) -> np.ndarray:
    """Evaluate the spline of ``repaired`` on an even grid over ``span``.

    Grid points before the first or after the last beat hold the edge value;
    if the beats start or stop more than ``gap_ms`` inside the span, the span
    is not covered.
    """
    t = repaired.t_ms
    if span is None:
        span = (t[0], t[-1])
    start, end = span
    if len(t) == 0 or t[0] > start + gap_ms or t[-1] < end - gap_ms:
        raise SpanNotCovered(f"beats do not cover [{start}, {end}] ms")
    step = 1000.0 / rate_hz
    n = int(np.floor((end - start) / step + 1e-9)) + 1
    grid = start + step * np.arange(n)
    # a few knots beyond each edge keep the spline ends away from the span
    lo, hi = np.searchsorted(t, [start, end])
    lo, hi = max(lo - 4, 0), min(hi + 4, len(t))
    return _spline_fill(t[lo:hi], repaired.rr_ms[lo:hi], grid)


def window_count(duration_ms: int, window_ms: int = WINDOW_MS, stride_ms: int = STRIDE_MS) -> int:
    if duration_ms < window_ms:
        return 0
    return (duration_ms - window_ms) // stride_ms + 1


def make_windows(s: Session, repaired: RrSeries, mask: ArtifactMask,
                 rate_hz: float = 4.0, window_ms: int = WINDOW_MS,
                 stride_ms: int = STRIDE_MS, gap_ms: float = HARD_GAP_MS) -> list[Window]:
    """Slice a repaired session into overlapping windows.

    A window that overlaps a hard gap, or whose beats do not cover it, gets an
    interpolated fraction of 1.0 so the quality filter removes it.
    """
    n_win = window_count(s.duration_ms, window_ms, stride_ms)
    if n_win == 0:
        raise SessionTooShort(f"session {s.id}: {s.duration_ms} ms < {window_ms} ms")
    t = repaired.t_ms
    flags = np.asarray(mask.flags, dtype=bool)
    gap_starts = np.flatnonzero(np.diff(t) > gap_ms)
    out = []
    for k in range(n_win):
        start = k * stride_ms
        end = start + window_ms
        lo, hi = np.searchsorted(t, [start, end], side="left")
        rr_in = repaired.rr_ms[lo:hi]
        in_gap = any(t[g] < end and t[g + 1] > start for g in gap_starts)
        try:
            tach = resample_tachogram(repaired, rate_hz, (start, end), gap_ms)
        except SpanNotCovered:
            tach = np.empty(0)
            in_gap = True
        if in_gap or hi - lo == 0:
            frac = 1.0
        else:
            frac = float(flags[lo:hi].sum()) / (hi - lo)
        out.append(Window(k, start, end, rr_in, tach, s.accel.slice(start, end), frac))
    return out


def window_quality_filter(ws, max_interp: float = 0.10):
    return [w for w in ws if not w.interpolated_fraction > max_interp]


def select_windows(ws, limit: Optional[int]):
    """Keep the ``limit`` least-interpolated windows, in temporal order."""
    if limit is None or len(ws) <= limit:
        return list(ws)
    order = sorted(range(len(ws)), key=lambda i: (ws[i].interpolated_fraction, i))
    return [ws[i] for i in sorted(order[:limit])]


def clean_session(s: Session, window_pts: int = 10, threshold: float = 0.20,
                  rate_hz: float = 4.0, max_interp: float = 0.10):
    """Run detection, repair and windowing; returns (windows, quality, mask)."""
    mask = detect_artifacts(s.rr, window_pts, threshold)
    repaired, q = repair(s.rr, mask)
    ws = make_windows(s, repaired, mask, rate_hz)
    return window_quality_filter(ws, max_interp), q, mask


def dump_clean(s: Session, mask: ArtifactMask, windows) -> dict:
    return {
        "session_id": s.id,
        "flags": np.flatnonzero(mask.flags).tolist(),
        "windows": [{"index": w.index, "start_ms": w.start_ms, "end_ms": w.end_ms,
                     "interpolated_fraction": w.interpolated_fraction} for w in windows],
    }
