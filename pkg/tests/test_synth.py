import json

import numpy as np
import pytest

from wearload import evaluate, synth
from wearload.core import Label
from wearload.ingest import load_corpus, score_tlx


def _cfg(**kw):
    return synth.GeneratorConfig(**kw)


def test_zero_variability_constant_series():
    flat = synth.HrvClass(mean_rr=800, lf_amp=0, hf_amp=0, jitter=0)
    cfg = _cfg(low=flat, high=flat, session_rr_sd=0, artifact_rate=0, session_minutes=5)
    clean, bad, idx = synth.gen_rr(cfg, Label.LOW, 0)
    assert np.all(clean.rr_ms == 800)
    assert idx.size == 0 and bad == clean


def test_sdnn_ordering_enforced():
    with pytest.raises(ValueError):
        _cfg(high=synth.HrvClass(720, 40, 30, 10))


@pytest.mark.parametrize("label", [Label.LOW, Label.HIGH])
def test_sdnn_near_target(label):
    cfg = _cfg()
    target = (cfg.high if label == Label.HIGH else cfg.low).sdnn_target
    clean, _, _ = synth.gen_rr(cfg, label, 11)
    assert abs(clean.rr_ms.std(ddof=1) - target) / target < 0.15


def test_injected_indices_bookkeeping():
    cfg = _cfg(session_minutes=20)
    accel, bursts = synth.gen_accel(cfg, 5)
    clean, bad, idx = synth.gen_rr(cfg, Label.HIGH, 6, accel, bursts)
    changed = np.flatnonzero(clean.rr_ms != bad.rr_ms)
    assert changed.tolist() == idx.tolist()
    assert np.array_equal(clean.t_ms, bad.t_ms)
    ratio = np.abs(bad.rr_ms[idx] / clean.rr_ms[idx] - 1)
    assert ratio.min() >= 0.3 - 0.002 and ratio.max() <= 0.6 + 0.002


def test_artifacts_follow_motion():
    cfg = _cfg()
    hits = np.zeros((2, 2))  # rows: burst, rest; cols: artifacts, beats
    for seed in range(4):
        accel, bursts = synth.gen_accel(cfg, seed)
        clean, _, idx = synth.gen_rr(cfg, Label.LOW, seed + 10, accel, bursts)
        active = bursts.active(clean.t_ms)
        is_art = np.isin(np.arange(len(clean)), idx)
        hits += [[is_art[active].sum(), active.sum()], [is_art[~active].sum(), (~active).sum()]]
    rate_burst, rate_rest = hits[:, 0] / hits[:, 1]
    assert rate_burst > 2 * rate_rest


def _mag(a):
    return np.sqrt(a.x ** 2 + a.y ** 2 + a.z ** 2)


def test_no_bursts_magnitude_near_one_g():
    a, sched = synth.gen_accel(_cfg(burst_fraction=0, session_minutes=5), 1)
    assert len(sched.starts_ms) == 0
    assert np.abs(_mag(a) - 1).max() < 0.1
    assert len(a) == 5 * 60 * 20


def test_burst_std_exceeds_rest():
    a, sched = synth.gen_accel(_cfg(), 2)
    mag = _mag(a)
    active = sched.active(a.t_ms)
    assert mag[active].std() >= 3 * mag[~active].std()


def test_same_seed_same_series():
    a1, _ = synth.gen_accel(_cfg(session_minutes=3), 4)
    a2, _ = synth.gen_accel(_cfg(session_minutes=3), 4)
    assert a1 == a2


def test_tlx_backfill_roundtrip():
    for score in (0.0, 12.5, 70.0, 100.0):
        assert score_tlx(synth.tlx_for_score(score)).score == pytest.approx(score, abs=1e-12)


def test_config_roundtrip():
    cfg = _cfg(n_sessions=7)
    assert synth.GeneratorConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    synth.gen_corpus(_cfg(n_sessions=120, session_minutes=3), out)
    return out


def test_corpus_files(corpus_dir):
    lines = (corpus_dir / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 120
    for kind in ("rr.csv", "accel.csv", "meta.json"):
        assert len(list((corpus_dir / "sessions").glob(f"*_{kind}"))) == 120
    truth = [json.loads(t) for t in (corpus_dir / "ground_truth.jsonl").read_text().splitlines()]
    n_high = sum(t["label"] == "High" for t in truth)
    assert abs(n_high - (120 - n_high)) <= 1


def test_corpus_reingests_and_labels_agree(corpus_dir):
    sessions = load_corpus(corpus_dir / "manifest.jsonl")
    assert len(sessions) == 120
    truth = {json.loads(t)["id"]: json.loads(t)["label"]
             for t in (corpus_dir / "ground_truth.jsonl").read_text().splitlines()}
    split = evaluate.median_split([(s.id, score_tlx(s.tlx).score) for s in sessions])
    agree = np.mean([split[sid].name.capitalize() == lab for sid, lab in truth.items()])
    assert agree >= 0.95


def test_corpus_is_deterministic(tmp_path):
    cfg = _cfg(n_sessions=3, session_minutes=3, seed=9)
    synth.gen_corpus(cfg, tmp_path / "a")
    synth.gen_corpus(cfg, tmp_path / "b")
    for f in sorted((tmp_path / "a").rglob("*.*")):
        assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()
