"""File parsing, NASA-TLX scoring, session assembly and admissibility rules."""
from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (ACCEL_RATE_HZ, RR_MAX_MS, RR_MIN_MS, TLX_FACTORS, AccelSeries,
                   RrSeries, Session, TlxResponse, validate_session)

log = logging.getLogger(__name__)

MIN_QUALITY = 0.5
MAX_TLX_DELAY_MIN = 30.0


class IngestError(Exception):
    pass


class MalformedRow(IngestError):
    def __init__(self, line, detail=""):
        self.line = line
        super().__init__(f"malformed row at line {line}" + (f": {detail}" if detail else ""))


class NonMonotonicTimestamp(IngestError):
    def __init__(self, line):
        self.line = line
        super().__init__(f"timestamp not strictly increasing at line {line}")


class EmptyFile(IngestError):
    pass


class ValidationFailed(IngestError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations[:5]) +
                         (" ..." if len(self.violations) > 5 else ""))


class RateWarning(UserWarning):
    def __init__(self, rate_hz):
        self.rate_hz = rate_hz
        super().__init__(f"accelerometer rate {rate_hz:.3g} Hz deviates from {ACCEL_RATE_HZ:g} Hz")


@dataclass(frozen=True)
class TlxScore:
    weights: tuple
    score: float


@dataclass(frozen=True)
class QualityReport:
    valid_fraction: float
    artifact_count: int
    total_rr: int


@dataclass(frozen=True)
class Admission:
    admit: bool
    reason: Optional[str] = None

    def __str__(self):
        return "Admit" if self.admit else f"Exclude({self.reason})"


def _read_rows(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise EmptyFile(f"{path}: empty file")
    if [h.strip() for h in rows[0]] != list(header):
        raise MalformedRow(1, f"expected header {','.join(header)}")
    if len(rows) == 1:
        raise EmptyFile(f"{path}: no data rows")
    return rows[1:]


def _parse_numbers(rows, ncols, conv):
    out = []
    for k, row in enumerate(rows):
        line = k + 2
        if len(row) != ncols:
            raise MalformedRow(line, f"expected {ncols} fields")
        try:
            vals = [conv(v) for v in row]
        except ValueError:
            raise MalformedRow(line, "non-numeric field") from None
        if not all(np.isfinite(vals)):
            raise MalformedRow(line, "non-finite field")
        out.append(vals)
    return np.array(out, dtype=float)


def _int_ms(v):
    f = float(v)
    if f != int(f):
        raise ValueError(v)
    return int(f)


def parse_rr_csv(path, rejected: Optional[list] = None) -> RrSeries:
    """Read a ``t_ms,rr_ms`` file.

    Rows whose interval lies outside the plausibility gate are dropped; their
    line numbers are logged and appended to ``rejected`` when given.
    """
    data = _parse_numbers(_read_rows(path, ("t_ms", "rr_ms")), 2, _int_ms)
    t, rr = data[:, 0], data[:, 1]
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        raise NonMonotonicTimestamp(int(bad[0]) + 3)
    keep = (rr >= RR_MIN_MS) & (rr <= RR_MAX_MS)
    if not keep.all():
        lines = (np.flatnonzero(~keep) + 2).tolist()
        log.warning("%s: rejected %d implausible RR rows at lines %s", path, len(lines), lines[:20])
        if rejected is not None:
            rejected.extend(lines)
    return RrSeries(t[keep], rr[keep])


def parse_accel_csv(path, unit: str = "g") -> AccelSeries:
    data = _parse_numbers(_read_rows(path, ("t_ms", "x", "y", "z")), 4, float)
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    if len(data) > 1:
        dt = float(np.median(np.diff(data[:, 0])))
        nominal = 1000.0 / ACCEL_RATE_HZ
        if dt <= 0 or abs(dt - nominal) > 0.1 * nominal:
            warnings.warn(RateWarning(1000.0 / dt if dt > 0 else float("inf")), stacklevel=2)
    return AccelSeries(data[:, 0], data[:, 1], data[:, 2], data[:, 3], unit)


def score_tlx(r: TlxResponse, raw: bool = False) -> TlxScore:
    """Weighted NASA-TLX workload: each factor is weighted by its pairwise wins.

    With ``raw=True`` the unweighted mean of the ratings is returned instead
    (for questionnaires collected without the comparison step).
    """
    ratings = np.asarray(r.ratings, dtype=float)
    if raw:
        return TlxScore(weights=(1,) * 6, score=float(ratings.mean()))
    if len(r.comparisons) != 15:
        raise ValueError("weighted TLX scoring needs all 15 pairwise comparisons")
    weights = [0] * 6
    for _, _, winner in r.comparisons:
        weights[TLX_FACTORS.index(winner)] += 1
    # offset from the lowest rating so that equal ratings come back exactly
    base = float(ratings.min())
    score = base + sum(w * (x - base) for w, x in zip(weights, ratings)) / 15.0
    return TlxScore(weights=tuple(weights), score=float(score))


def assemble_session(rr: RrSeries, accel: AccelSeries, tlx: Optional[TlxResponse],
                     meta: dict, require_comparisons: bool = True) -> Session:
    s = Session(
        id=str(meta["id"]),
        participant_id=str(meta.get("participant_id", "")),
        duration_ms=int(meta["duration_ms"]),
        rr=rr, accel=accel, tlx=tlx,
        tlx_delay_min=meta.get("tlx_delay_min"),
    )
    problems = validate_session(s, require_comparisons)
    if problems:
        raise ValidationFailed(problems)
    return s


def session_admissible(s: Session, q: QualityReport) -> Admission:
    if len(s.accel) == 0:
        return Admission(False, "MissingAccel")
    if q.valid_fraction < MIN_QUALITY:
        return Admission(False, "LowQuality")
    if s.tlx is None:
        return Admission(False, "MissingQuestionnaire")
    if s.tlx_delay_min is None or s.tlx_delay_min > MAX_TLX_DELAY_MIN:
        return Admission(False, "StaleQuestionnaire")
    return Admission(True)


def read_meta(path) -> tuple[dict, Optional[TlxResponse]]:
    """Parse a session metadata JSON; returns (meta, tlx)."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    meta = {"id": d["id"], "participant_id": d.get("participant_id", ""),
            "duration_ms": d["duration_ms"], "accel_unit": d.get("accel_unit", "g")}
    tlx = None
    if d.get("tlx") is not None:
        tlx = TlxResponse.from_dict(d["tlx"])
        meta["tlx_delay_min"] = d["tlx"].get("delay_min")
    return meta, tlx


def write_meta(path, s: Session, accel_unit: str = "g"):
    d = {"id": s.id, "participant_id": s.participant_id, "duration_ms": s.duration_ms,
         "accel_unit": accel_unit, "tlx": None}
    if s.tlx is not None:
        d["tlx"] = dict(s.tlx.to_dict(), delay_min=s.tlx_delay_min)
    Path(path).write_text(json.dumps(d, indent=1) + "\n", encoding="utf-8")


def write_rr_csv(path, rr: RrSeries):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t_ms,rr_ms\n")
        for t, v in zip(rr.t_ms, rr.rr_ms):
            fh.write(f"{round(t)},{round(v)}\n")


def write_accel_csv(path, a: AccelSeries):
    data = np.column_stack([a.t_ms, a.x, a.y, a.z])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t_ms,x,y,z\n")
        np.savetxt(fh, data, fmt=["%d", "%.5f", "%.5f", "%.5f"], delimiter=",")


def read_manifest(path) -> list[dict]:
    """One JSON object per line with ``id``, ``rr``, ``accel``, ``meta`` paths.

    Relative paths resolve against the manifest's directory.
    """
    base = Path(path).parent
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            for k in ("rr", "accel", "meta"):
                if d.get(k) is not None:
                    d[k] = str(base / d[k])
            out.append(d)
    return out


def load_session(entry: dict, require_comparisons: bool = True) -> Session:
    meta, tlx = read_meta(entry["meta"])
    rr = parse_rr_csv(entry["rr"])
    if entry.get("accel") and Path(entry["accel"]).exists():
        accel = parse_accel_csv(entry["accel"], meta["accel_unit"])
    else:
        accel = AccelSeries([], [], [], [], meta["accel_unit"])
    return assemble_session(rr, accel, tlx, meta, require_comparisons)


def load_corpus(manifest_path, require_comparisons: bool = True) -> list[Session]:
    return [load_session(e, require_comparisons) for e in read_manifest(manifest_path)]
