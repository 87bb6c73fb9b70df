"""Synthetic labelled corpora with known ground truth.

Each session's RR intervals follow a two-sinusoid model (0.1 Hz and 0.25 Hz)
plus white jitter; high-workload sessions get shorter intervals, smaller
oscillations and a larger LF/HF ratio. Artifact spikes are injected at a
rate that rises with concurrent wrist motion.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .core import TLX_PAIRS, AccelSeries, Label, RrSeries, Session, TlxResponse
from .ingest import write_accel_csv, write_meta, write_rr_csv


@dataclass(frozen=True)
class HrvClass:
    mean_rr: float
    lf_amp: float
    hf_amp: float
    jitter: float

    @property
    def sdnn_target(self):
        return math.sqrt(self.lf_amp ** 2 / 2 + self.hf_amp ** 2 / 2 + self.jitter ** 2)


@dataclass(frozen=True)
class GeneratorConfig:
    n_sessions: int = 120
    session_minutes: float = 60.0
    high_prior: float = 0.5
    low: HrvClass = HrvClass(mean_rr=850.0, lf_amp=35.0, hf_amp=20.0, jitter=10.0)
    high: HrvClass = HrvClass(mean_rr=720.0, lf_amp=22.0, hf_amp=6.0, jitter=6.0)
    session_rr_sd: float = 25.0
    spike_range: tuple = (0.3, 0.6)
    artifact_rate: float = 0.01
    motion_coupling: float = 0.3
    burst_fraction: float = 0.1
    burst_amp_g: float = 0.3
    rest_noise_g: float = 0.01
    gap_prob: float = 0.05
    low_quality_sessions: int = 0
    low_quality_rate: float = 0.6
    tlx_high: tuple = (70.0, 10.0)
    tlx_low: tuple = (30.0, 10.0)
    max_tlx_delay_min: float = 25.0
    seed: int = 0

    def __post_init__(self):
        for c in (self.low, self.high):
            if min(c.lf_amp, c.hf_amp, c.jitter) < 0:
                raise ValueError("amplitudes must be non-negative")
        if self.high.sdnn_target > self.low.sdnn_target:
            raise ValueError("high-workload SDNN target must not exceed the low-workload one")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("low", "high"):
            if k in d and isinstance(d[k], dict):
                d[k] = HrvClass(**d[k])
        for k in ("spike_range", "tlx_high", "tlx_low"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class BurstSchedule:
    starts_ms: np.ndarray
    ends_ms: np.ndarray

    def active(self, t_ms):
        t = np.asarray(t_ms)
        i = np.searchsorted(self.starts_ms, t, side="right") - 1
        ok = i >= 0
        out = np.zeros(t.shape, dtype=bool)
        out[ok] = t[ok] < self.ends_ms[i[ok]]
        return out


def gen_accel(cfg: GeneratorConfig, seed, duration_ms: Optional[int] = None):
    """20 Hz wrist acceleration: gravity plus noise at rest, oscillating bursts.

    Returns ``(AccelSeries, BurstSchedule)``.
    """
    rng = np.random.default_rng(seed)
    dur = int(duration_ms if duration_ms is not None else cfg.session_minutes * 60_000)
    t = np.arange(0, dur, 50, dtype=float)
    g = rng.normal(size=3)
    g /= np.linalg.norm(g)
    xyz = np.tile(g, (len(t), 1)) + rng.normal(0, cfg.rest_noise_g, size=(len(t), 3))

    starts, ends = [], []
    if cfg.burst_fraction > 0:
        mean_len = 15_000.0
        mean_rest = mean_len * (1 - cfg.burst_fraction) / cfg.burst_fraction
        pos = rng.exponential(mean_rest)
        while pos < dur:
            length = rng.uniform(5_000, 25_000)
            starts.append(pos)
            ends.append(min(pos + length, dur))
            pos += length + rng.exponential(mean_rest)
    sched = BurstSchedule(np.array(starts), np.array(ends))
    for s, e in zip(starts, ends):
        sel = (t >= s) & (t < e)
        ts = t[sel] / 1000.0
        f = rng.uniform(1.0, 3.0)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        wave = cfg.burst_amp_g * (np.sin(2 * np.pi * f * ts + rng.uniform(0, 2 * np.pi))
                                  + 0.4 * np.sin(2 * np.pi * 1.7 * f * ts))
        xyz[sel] += np.outer(wave, direction) + rng.normal(0, 0.05, size=(sel.sum(), 3))
    xyz = np.round(xyz, 5)  # the CSV precision, so files re-ingest exactly
    return AccelSeries(t, xyz[:, 0], xyz[:, 1], xyz[:, 2], "g"), sched


def _motion_level(accel: AccelSeries, t_ms):
    """Mean |magnitude - 1 g| over the surrounding second, at each time in ``t_ms``."""
    mag = np.sqrt(accel.x ** 2 + accel.y ** 2 + accel.z ** 2)
    dev = np.abs(mag - np.median(mag))
    k = 20
    smooth = np.convolve(dev, np.ones(k) / k, mode="same")
    return np.interp(t_ms, accel.t_ms, smooth)


def gen_rr(cfg: GeneratorConfig, label: Label, seed, accel: Optional[AccelSeries] = None,
           bursts: Optional[BurstSchedule] = None, artifact_rate: Optional[float] = None,
           duration_ms: Optional[int] = None):
    """Beat series for one session.

    Returns ``(clean, corrupted, artifact_indices)`` where indices refer to
    positions in both series (they share timestamps).
    """
    rng = np.random.default_rng(seed)
    cls = cfg.high if label == Label.HIGH else cfg.low
    dur = int(duration_ms if duration_ms is not None else cfg.session_minutes * 60_000)
    mu = cls.mean_rr + rng.normal(0, cfg.session_rr_sd) if cfg.session_rr_sd else cls.mean_rr
    ph1, ph2 = rng.uniform(0, 2 * np.pi, size=2)
    n_max = int(dur / 250) + 2
    noise = rng.normal(0, cls.jitter, size=n_max) if cls.jitter else np.zeros(n_max)
    t_list, rr_list = [], []
    t = 0.0
    for k in range(n_max):
        ts = t / 1000.0
        rr = (mu + cls.lf_amp * math.sin(2 * math.pi * 0.1 * ts + ph1)
              + cls.hf_amp * math.sin(2 * math.pi * 0.25 * ts + ph2) + noise[k])
        rr = float(round(min(max(rr, 300.0), 2000.0)))
        t += rr
        if t > dur:
            break
        t_list.append(t)
        rr_list.append(rr)
    t_arr = np.array(t_list)
    rr_arr = np.array(rr_list)

    keep = np.ones(len(t_arr), dtype=bool)
    if bursts is not None and cfg.gap_prob > 0:
        for s, e in zip(bursts.starts_ms, bursts.ends_ms):
            if rng.random() < cfg.gap_prob:
                keep &= ~((t_arr >= s) & (t_arr < e))
    t_arr, rr_arr = t_arr[keep], rr_arr[keep]

    base = cfg.artifact_rate if artifact_rate is None else artifact_rate
    rate = np.full(len(t_arr), base)
    if accel is not None and cfg.motion_coupling > 0:
        rate = rate + cfg.motion_coupling * _motion_level(accel, t_arr)
    rate = np.clip(rate, 0.0, 0.95)
    hit = rng.random(len(t_arr)) < rate
    hit[0] = False
    idx = np.flatnonzero(hit)
    lo, hi = cfg.spike_range
    mags = rng.uniform(lo, hi, size=idx.size) * rng.choice([-1.0, 1.0], size=idx.size)
    bad = rr_arr.copy()
    bad[idx] = np.round(rr_arr[idx] * (1.0 + mags))
    return RrSeries(t_arr, rr_arr), RrSeries(t_arr, bad), idx


def tlx_for_score(score: float) -> TlxResponse:
    """Questionnaire whose weighted score is ``score``: uniform ratings,
    comparisons always won by the factor listed first."""
    return TlxResponse(ratings=(score,) * 6, comparisons=tuple((a, b, a) for a, b in TLX_PAIRS))


def _labels(cfg: GeneratorConfig, rng) -> list[Label]:
    n_high = int(round(cfg.n_sessions * cfg.high_prior))
    labels = [Label.HIGH] * n_high + [Label.LOW] * (cfg.n_sessions - n_high)
    rng.shuffle(labels)
    return labels


def generate_sessions(cfg: GeneratorConfig) -> Iterator[tuple[Session, dict]]:
    """Yield ``(session, truth)`` pairs one at a time (sessions are large)."""
    root = np.random.SeedSequence(cfg.seed)
    rng = np.random.default_rng(root.spawn(1)[0])
    labels = _labels(cfg, rng)
    low_q = set(rng.choice(cfg.n_sessions, size=cfg.low_quality_sessions, replace=False).tolist()) \
        if cfg.low_quality_sessions else set()
    children = root.spawn(cfg.n_sessions)
    dur = int(cfg.session_minutes * 60_000)
    for k, (label, ss) in enumerate(zip(labels, children)):
        s_acc, s_rr, s_tlx = ss.spawn(3)
        accel, bursts = gen_accel(cfg, s_acc, dur)
        rate = cfg.low_quality_rate if k in low_q else None
        clean, bad, idx = gen_rr(cfg, label, s_rr, accel, bursts, rate, dur)
        trng = np.random.default_rng(s_tlx)
        mean, sd = cfg.tlx_high if label == Label.HIGH else cfg.tlx_low
        score = float(np.clip(trng.normal(mean, sd), 0.0, 100.0))
        delay = float(trng.uniform(0, cfg.max_tlx_delay_min))
        sid = f"s{k:04d}"
        session = Session(id=sid, participant_id=f"p{k % 12:02d}", duration_ms=dur,
                          rr=bad, accel=accel, tlx=tlx_for_score(score), tlx_delay_min=delay)
        truth = {"id": sid, "label": label.name.capitalize(), "score": score,
                 "artifact_indices": idx.tolist(), "low_quality": k in low_q,
                 "clean_rr": clean.rr_ms.tolist()}
        yield session, truth


def gen_corpus(cfg: GeneratorConfig, out_dir) -> Path:
    """Write session files, ``manifest.jsonl`` and ``ground_truth.jsonl``.

    Returns the manifest path.
    """
    out = Path(out_dir)
    (out / "sessions").mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as mf, \
            open(out / "ground_truth.jsonl", "w", encoding="utf-8") as gf:
        for s, truth in generate_sessions(cfg):
            stem = f"sessions/{s.id}"
            write_rr_csv(out / f"{stem}_rr.csv", s.rr)
            write_accel_csv(out / f"{stem}_accel.csv", s.accel)
            write_meta(out / f"{stem}_meta.json", s)
            mf.write(json.dumps({"id": s.id, "rr": f"{stem}_rr.csv",
                                 "accel": f"{stem}_accel.csv", "meta": f"{stem}_meta.json"}) + "\n")
            truth = {k: v for k, v in truth.items() if k != "clean_rr"}
            gf.write(json.dumps(truth) + "\n")
    (out / "generator_config.json").write_text(json.dumps(cfg.to_dict(), indent=1) + "\n")
    return manifest
