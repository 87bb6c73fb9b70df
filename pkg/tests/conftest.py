import numpy as np
import pytest

from wearload.core import AccelSeries, RrSeries, Session, TlxResponse
from wearload.synth import tlx_for_score


def rr_from_function(f, duration_ms, start_ms=0.0):
    """Beat series whose interval at time t is f(t); t advances by each interval."""
    t, ts, vs = float(start_ms), [], []
    while True:
        v = float(f(t))
        t += v
        if t > duration_ms:
            break
        ts.append(t)
        vs.append(v)
    return RrSeries(np.array(ts), np.array(vs))


def still_accel(duration_ms, g=(0.0, 0.0, 1.0)):
    t = np.arange(0, duration_ms, 50.0)
    ones = np.ones_like(t)
    return AccelSeries(t, g[0] * ones, g[1] * ones, g[2] * ones)


def make_session(rr=None, duration_ms=600_000, sid="s", score=50.0, delay=5.0, accel=None):
    if rr is None:
        rr = rr_from_function(lambda t: 800.0 + 40 * np.sin(2 * np.pi * 0.1 * t / 1000), duration_ms)
    if accel is None:
        accel = still_accel(duration_ms)
    tlx = None if score is None else tlx_for_score(score)
    return Session(sid, "p", duration_ms, rr, accel, tlx, delay)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_corpus():
    """20 ten-minute synthetic sessions, cleaned, featurised and labelled."""
    from wearload import evaluate, synth
    from wearload.config import PipelineConfig

    gcfg = synth.GeneratorConfig(n_sessions=20, session_minutes=10, seed=3)
    cfg = PipelineConfig(cv_folds=5)
    records = evaluate.prepare_corpus((s for s, _ in synth.generate_sessions(gcfg)), cfg)
    return evaluate.label_corpus(records), cfg
