"""Per-window HRV and acceleration features (19 in total)."""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import welch

from .core import FEATURE_NAMES, AccelSeries, FeatureVector

log = logging.getLogger(__name__)

HIST_BIN_MS = 1000.0 / 128.0
VLF_BAND = (0.0, 0.04)
LF_BAND = (0.04, 0.15)
HF_BAND = (0.15, 0.40)


class FeatureError(Exception):
    pass


class TooFewSamples(FeatureError):
    pass


class InvalidWindow(FeatureError):
    pass


def hrv_time(rr) -> dict:
    """meanRR, SDNN, RMSSD, pNN50 and SDSD of one window's intervals (ms).

    Standard deviations use the N-1 denominator; pNN50 counts successive
    differences strictly greater than 50 ms.
    """
    rr = np.asarray(rr, dtype=float)
    if rr.size < 2:
        raise TooFewSamples(f"{rr.size} RR samples, need 2")
    d = np.diff(rr)
    return {
        "meanRR": float(rr.mean()),
        "SDNN": float(rr.std(ddof=1)),
        "RMSSD": float(np.sqrt(np.mean(d * d))),
        "pNN50": float(100.0 * np.count_nonzero(np.abs(d) > 50.0) / d.size),
        "SDSD": float(d.std(ddof=1)) if d.size > 1 else 0.0,
    }


def rr_histogram(rr, bin_ms: float = HIST_BIN_MS):
    """Counts on bins aligned to integer multiples of ``bin_ms``.

    Returns ``(counts, first_bin)``: bin ``k`` covers
    ``[(first_bin + k) * bin_ms, (first_bin + k + 1) * bin_ms)``.
    """
    idx = np.floor(np.asarray(rr, dtype=float) / bin_ms).astype(np.int64)
    first = int(idx.min())
    return np.bincount(idx - first), first


def _side_errors(counts, apex, height, centers, left: bool):
    # squared error of the triangle side as a function of its base endpoint;
    # left and right sides touch disjoint bins, so each is minimised alone
    if left:
        bins = np.arange(0, apex)
        edges = np.arange(0, apex + 1)  # candidate base points, in bin units
    else:
        bins = np.arange(apex + 1, len(counts))
        edges = np.arange(apex + 1, len(counts) + 1)
    xa = centers[apex]
    errs = np.empty(len(edges))
    for k, e in enumerate(edges):
        c = centers[bins]
        if left:
            q = np.where(c > e, height * (c - e) / (xa - e), 0.0)
        else:
            q = np.where(c < e, height * (e - c) / (e - xa), 0.0)
        errs[k] = np.sum((counts[bins] - q) ** 2)
    return edges, errs


def hrv_geometric(rr, bin_ms: float = HIST_BIN_MS) -> dict:
    """HRV triangular index and TINN from the 1/128 s histogram.

    TINN is the base width ``M - N`` of the triangle that best fits the
    histogram in the least-squares sense, with the apex pinned to the centre
    and height of the modal bin and the base endpoints restricted to bin edges.
    """
    rr = np.asarray(rr, dtype=float)
    if rr.size < 2:
        raise TooFewSamples(f"{rr.size} RR samples, need 2")
    counts, _ = rr_histogram(rr, bin_ms)
    counts = counts.astype(float)
    apex = int(np.argmax(counts))
    height = counts[apex]
    centers = np.arange(len(counts)) + 0.5
    le, lerr = _side_errors(counts, apex, height, centers, left=True)
    re, rerr = _side_errors(counts, apex, height, centers, left=False)
    n_edge = le[int(np.argmin(lerr))]
    m_edge = re[int(np.argmin(rerr))]
    return {"triangular_index": float(rr.size / height),
            "TINN": float((m_edge - n_edge) * bin_ms)}


def band_power(freqs, psd, lo, hi) -> float:
    """Trapezoidal integral of ``psd`` over ``[lo, hi]``, endpoints interpolated."""
    hi = min(hi, freqs[-1])
    if hi <= lo:
        return 0.0
    inner = (freqs > lo) & (freqs < hi)
    f = np.concatenate([[lo], freqs[inner], [hi]])
    p = np.concatenate([[np.interp(lo, freqs, psd)], psd[inner], [np.interp(hi, freqs, psd)]])
    return float(trapezoid(p, f))


def tachogram_psd(tach, rate_hz: float = 4.0, segment: int = 256):
    x = np.asarray(tach, dtype=float)
    x = x - x.mean()
    nper = min(segment, x.size)
    return welch(x, fs=rate_hz, window="hann", nperseg=nper, noverlap=nper // 2,
                 detrend=False, return_onesided=True, scaling="density")


def hrv_frequency(tach, rate_hz: float = 4.0, segment: int = 256) -> dict:
    """VLF, LF, HF band powers (ms^2) and LF/HF from a Welch periodogram.

    ``LF_HF`` is ``inf`` when HF is exactly zero; callers treat that as an
    unusable window.
    """
    tach = np.asarray(tach, dtype=float)
    if tach.size < 64:
        raise TooFewSamples(f"tachogram of {tach.size} samples, need 64")
    f, p = tachogram_psd(tach, rate_hz, segment)
    vlf = band_power(f, p, *VLF_BAND)
    lf = band_power(f, p, *LF_BAND)
    hf = band_power(f, p, *HF_BAND)
    return {"VLF": vlf, "LF": lf, "HF": hf,
            "LF_HF": lf / hf if hf > 0 else float("inf")}


def accel_features(a: AccelSeries) -> dict:
    """Per-axis means and sample stds, mean magnitude, and FFT motion energy.

    Energy is the non-DC spectral power of the mean-removed magnitude,
    normalised so that it equals the magnitude's (population) variance.
    """
    if len(a) < 2:
        raise TooFewSamples(f"{len(a)} accel samples, need 2")
    x, y, z = (np.asarray(v, dtype=float) for v in (a.x, a.y, a.z))
    mag = np.sqrt(x * x + y * y + z * z)
    m = mag - mag.mean()
    spectrum = np.fft.fft(m)
    n = m.size
    energy = float(np.sum(np.abs(spectrum[1:]) ** 2) / (n * n))
    return {
        "meanX": float(x.mean()), "meanY": float(y.mean()), "meanZ": float(z.mean()),
        "meanMag": float(mag.mean()),
        "stdX": float(x.std(ddof=1)), "stdY": float(y.std(ddof=1)), "stdZ": float(z.std(ddof=1)),
        "energy": energy,
    }


def build_feature_vector(w, rate_hz: float = 4.0) -> FeatureVector:
    """All 19 features of a window. Raises FeatureError if the window is unusable."""
    vals = {}
    vals.update(hrv_time(w.rr_clean))
    vals.update(hrv_geometric(w.rr_clean))
    vals.update(hrv_frequency(w.tachogram, rate_hz))
    if not np.isfinite(vals["LF_HF"]):
        raise InvalidWindow("HF power is zero")
    vals.update(accel_features(w.accel_slice))
    fv = FeatureVector(np.array([vals[k] for k in FEATURE_NAMES]))
    bad = fv.violations()
    if bad:
        raise InvalidWindow("; ".join(bad))
    return fv


def extract_session(windows, rate_hz: float = 4.0, session_id: Optional[str] = None):
    """Feature vectors for the usable windows; returns (kept_windows, vectors)."""
    kept, vecs = [], []
    for w in windows:
        try:
            vecs.append(build_feature_vector(w, rate_hz))
        except FeatureError as exc:
            log.info("session %s window %d dropped: %s", session_id, w.index, exc)
            continue
        kept.append(w)
    return kept, vecs


def write_feature_csv(path, rows, comment: Optional[str] = None):
    """``rows`` yields ``(session_id, window_index, label, values)``; values may be
    a FeatureVector or a plain array. ``comment`` becomes a leading ``#`` line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(",".join(FEATURE_NAMES + ("session_id", "window_index", "label")) + "\n")
        for sid, idx, label, fv in rows:
            vals = ",".join(repr(float(v)) for v in getattr(fv, "values", fv))
            fh.write(f"{vals},{sid},{idx},{'' if label is None else label}\n")

