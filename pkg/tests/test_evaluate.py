import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wearload import evaluate
from wearload.config import PipelineConfig, load_config
from wearload.core import Label

from conftest import make_session


# -- labelling

def test_median_split_simple():
    out = evaluate.median_split([("a", 10), ("b", 20), ("c", 30), ("d", 40)])
    assert {k for k, v in out.items() if v == Label.HIGH} == {"c", "d"}


def test_median_split_ties_by_id():
    out = evaluate.median_split([("b", 50), ("a", 50), ("c", 50)])
    assert [k for k, v in out.items() if v == Label.HIGH] == ["a"]


def test_median_split_paper_size():
    rng = np.random.default_rng(0)
    out = evaluate.median_split([(f"s{i}", float(v)) for i, v in enumerate(rng.uniform(0, 100, 164))])
    assert sum(v == Label.HIGH for v in out.values()) == 82


def test_median_split_needs_two():
    with pytest.raises(evaluate.TooFewSessions):
        evaluate.median_split([("a", 1.0)])


# -- folds

def _ids(n_high, n_low):
    ids = [f"h{i:03d}" for i in range(n_high)] + [f"l{i:03d}" for i in range(n_low)]
    return ids, [1] * n_high + [0] * n_low


def test_folds_82_82():
    ids, labels = _ids(82, 82)
    folds = evaluate.stratified_folds(ids, labels, 10, seed=0)
    assert sorted(len(f) for f in folds) == [16] * 6 + [17] * 4
    for f in folds:
        assert sum(i.startswith("h") for i in f) in (8, 9)
        assert sum(i.startswith("l") for i in f) in (8, 9)


def test_folds_10_10():
    ids, labels = _ids(10, 10)
    for f in evaluate.stratified_folds(ids, labels, 10, seed=3):
        assert sorted(i[0] for i in f) == ["h", "l"]


@settings(max_examples=100, deadline=None)
@given(st.integers(10, 60), st.integers(10, 60), st.integers(2, 10), st.integers(0, 1000))
def test_folds_partition(n_high, n_low, k, seed):
    ids, labels = _ids(n_high, n_low)
    folds = evaluate.stratified_folds(ids, labels, k, seed)
    flat = [i for f in folds for i in f]
    assert sorted(flat) == sorted(ids)
    highs = [sum(i.startswith("h") for i in f) for f in folds]
    lows = [len(f) - h for f, h in zip(folds, highs)]
    assert max(highs) - min(highs) <= 1 and max(lows) - min(lows) <= 1


def test_folds_need_k_per_class():
    ids, labels = _ids(5, 20)
    with pytest.raises(evaluate.TooFewPerClass):
        evaluate.stratified_folds(ids, labels, 10)


def test_folds_seeded():
    ids, labels = _ids(30, 30)
    assert evaluate.stratified_folds(ids, labels, 5, 1) == evaluate.stratified_folds(ids, labels, 5, 1)
    assert evaluate.stratified_folds(ids, labels, 5, 1) != evaluate.stratified_folds(ids, labels, 5, 2)


# -- session preparation

def test_vote_tie_goes_high():
    assert evaluate.vote([0, 1]) == 1
    assert evaluate.vote([0, 0, 1]) == 0


def test_prepare_excludes_short_session():
    rec = evaluate.prepare_session(make_session(duration_ms=100_000))
    assert str(rec.admission) == "Exclude(SessionTooShort)"


def test_prepare_excludes_missing_questionnaire():
    rec = evaluate.prepare_session(make_session(duration_ms=300_000, score=None))
    assert str(rec.admission) == "Exclude(MissingQuestionnaire)"


def test_prepare_caps_windows():
    cfg = PipelineConfig(windows_per_session=2)
    rec = evaluate.prepare_session(make_session(duration_ms=600_000), cfg)
    assert rec.admission.admit
    assert rec.vectors.shape == (2, 19)


# -- cross-validation

def test_leakage_is_caught(small_corpus):
    corpus, cfg = small_corpus
    train = corpus.sessions[:12]
    with pytest.raises(evaluate.LeakageError):
        evaluate._run_fold(0, "gnb", train, train[:2], cfg)


@pytest.mark.parametrize("clf", ["gnb", "knn", "rf", "svm", "mlp"])
def test_cv_report_shape_and_determinism(small_corpus, clf):
    corpus, cfg = small_corpus
    cfg = cfg.updated(rf_trees=10, mlp_max_epochs=100)
    a = evaluate.run_cv(corpus, clf, cfg)
    b = evaluate.run_cv(corpus, clf, cfg)
    assert a.to_json() == b.to_json()
    assert set(a.results) == {"window", "session"}
    assert a.results["session"].n_units == len(corpus.sessions)
    assert all(f["leakage_checked"] for f in a.folds)
    d = json.loads(a.to_json())
    assert d["config_hash"] == cfg.hash and d["seed"] == cfg.seed


def test_cv_with_cfs(small_corpus):
    corpus, cfg = small_corpus
    rep = evaluate.run_cv(corpus, "gnb", cfg.updated(feature_set="cfs"))
    assert all(0 < len(f["columns"]) < 19 for f in rep.folds)


def test_svm_folds_record_pca(small_corpus):
    corpus, cfg = small_corpus
    rep = evaluate.run_cv(corpus, "svm", cfg)
    assert all(1 <= f["pca_components"] <= 19 for f in rep.folds)


def test_window_level_folds(small_corpus):
    corpus, cfg = small_corpus
    rep = evaluate.run_cv(corpus, "gnb", cfg.updated(window_level_folds=True))
    assert set(rep.results) == {"window"}
    assert rep.results["window"].n_units == sum(len(s.vectors) for s in corpus.sessions)
    with pytest.raises(ValueError):
        evaluate.run_cv(corpus, "lstm", cfg.updated(window_level_folds=True))


def _tiny_lstm(cfg):
    return cfg.updated(lstm_blocks=6, lstm_dense=4, lstm_max_epochs=3, lstm_seq_len=9)


def test_lstm_cv_session_level_only(small_corpus):
    corpus, cfg = small_corpus
    rep = evaluate.run_cv(corpus, "lstm", _tiny_lstm(cfg))
    assert set(rep.results) == {"session"}


@pytest.mark.parametrize("clf", ["gnb", "svm", "lstm"])
def test_pipeline_roundtrip(small_corpus, clf):
    corpus, cfg = small_corpus
    pipe = evaluate.fit_pipeline(clf, corpus.sessions, _tiny_lstm(cfg), seed=5)
    back = evaluate.FittedPipeline.from_dict(json.loads(json.dumps(pipe.to_dict())))
    for s in corpus.sessions[:5]:
        assert back.predict_session(s) == pipe.predict_session(s)
    assert back.config_hash == pipe.config_hash == _tiny_lstm(cfg).hash


def test_grid_layout(small_corpus):
    corpus, cfg = small_corpus
    g = evaluate.grid_report(corpus, [200, 8], [0.0, 0.2], _tiny_lstm(cfg).updated(cv_folds=2))
    assert np.shape(g.accuracy) == (2, 2)
    lines = g.render().splitlines()
    assert lines[1].startswith("200 LSTM Blocks")
    assert lines[1].rstrip().endswith("%*")
    assert "70.00%" in g.render()


def test_report_text(small_corpus):
    corpus, cfg = small_corpus
    rep = evaluate.run_cv(corpus, "gnb", cfg)
    text = evaluate.render_report([rep])
    assert "Naive Bayes" in text and "baseline" in text and cfg.hash in text


# -- config

def test_config_hash_ignores_jobs():
    assert PipelineConfig(jobs=4).hash == PipelineConfig(jobs=1).hash
    assert PipelineConfig(seed=1).hash != PipelineConfig(seed=2).hash


def test_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"cv_folds": 5, "classifier": "rf"}')
    assert load_config(p) == PipelineConfig(cv_folds=5, classifier="rf")
    p.write_text('{"bogus": 1}')
    with pytest.raises(ValueError):
        load_config(p)
