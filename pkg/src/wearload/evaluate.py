"""Corpus preparation, median-split labelling and stratified cross-validation."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import clean as clean_mod
from .config import CLASSIFIERS, PipelineConfig
from .core import FEATURE_NAMES, Label, Session
from .features import extract_session
from .ingest import Admission, QualityReport, score_tlx, session_admissible
from .learn import (LstmParams, SequenceDataset, model_from_dict, pad_sequence, train_gnb,
                    train_knn, train_lstm, train_mlp, train_rf, train_svm_rbf)
from .reduce import (PcaModel, Standardizer, cfs_select, fit_standardizer, pca_fit)

log = logging.getLogger(__name__)

SCALED = {"knn", "svm", "mlp", "lstm"}
REFERENCE_OPTIMUM = (200, 0.2, 70.00)


class TooFewSessions(ValueError):
    pass


class TooFewPerClass(ValueError):
    pass


class LeakageError(AssertionError):
    pass


@dataclass(eq=False)
class SessionData:
    """Everything the learners need from one session, after cleaning."""

    id: str
    score: Optional[float]
    vectors: np.ndarray  # (n_windows, 19)
    fractions: np.ndarray
    window_index: np.ndarray
    quality: Optional[QualityReport]
    admission: Admission
    label: Optional[int] = None

    def to_dict(self):
        return {"id": self.id, "score": self.score, "vectors": self.vectors.tolist(),
                "fractions": self.fractions.tolist(), "window_index": self.window_index.tolist(),
                "quality": None if self.quality is None else self.quality.__dict__,
                "admission": str(self.admission), "label": self.label}


def prepare_session(s: Session, cfg: PipelineConfig = PipelineConfig()) -> SessionData:
    """Clean, window and featurise one session and decide whether it is usable."""
    score = None
    if s.tlx is not None:
        try:
            score = score_tlx(s.tlx, raw=cfg.raw_tlx).score
        except ValueError:
            score = None
    empty = np.zeros((0, len(FEATURE_NAMES)))

    def excluded(reason, q=None):
        return SessionData(s.id, score, empty, np.zeros(0), np.zeros(0, dtype=int), q,
                           Admission(False, reason))

    try:
        mask = clean_mod.detect_artifacts(s.rr, cfg.artifact_window_pts, cfg.artifact_threshold)
        repaired, q = clean_mod.repair(s.rr, mask)
    except (clean_mod.TooFewValidSamples, ValueError):
        n = len(s.rr)
        return excluded("LowQuality", QualityReport(0.0, n, n))
    adm = session_admissible(s, q)
    if score is None and adm.admit:
        adm = Admission(False, "MissingQuestionnaire")
    if not adm.admit:
        return SessionData(s.id, score, empty, np.zeros(0), np.zeros(0, dtype=int), q, adm)
    try:
        ws = clean_mod.make_windows(s, repaired, mask, cfg.tachogram_hz,
                                    cfg.window_s * 1000, cfg.stride_s * 1000)
    except clean_mod.SessionTooShort:
        return excluded("SessionTooShort", q)
    ws = clean_mod.window_quality_filter(ws, cfg.max_interpolated)
    kept, vecs = extract_session(ws, cfg.tachogram_hz, s.id)
    kept_idx = list(range(len(kept)))
    if cfg.windows_per_session is not None:
        sel = clean_mod.select_windows(kept, cfg.windows_per_session)
        chosen = {w.index for w in sel}
        kept_idx = [i for i, w in enumerate(kept) if w.index in chosen]
    if not kept_idx:
        return excluded("NoUsableWindows", q)
    V = np.array([vecs[i].values for i in kept_idx])
    return SessionData(s.id, score, V,
                       np.array([kept[i].interpolated_fraction for i in kept_idx]),
                       np.array([kept[i].index for i in kept_idx]), q, adm)


def prepare_corpus(sessions: Iterable[Session], cfg: PipelineConfig = PipelineConfig()):
    if cfg.jobs and cfg.jobs > 1:
        from joblib import Parallel, delayed
        return Parallel(n_jobs=cfg.jobs)(delayed(prepare_session)(s, cfg) for s in sessions)
    return [prepare_session(s, cfg) for s in sessions]


def median_split(scored: Sequence[tuple[str, float]]) -> dict[str, Label]:
    """Top half by score is High; ties in score order by id, an odd extra goes Low."""
    if len(scored) < 2:
        raise TooFewSessions(f"{len(scored)} sessions, need at least 2")
    order = sorted(scored, key=lambda p: (-p[1], p[0]))
    n_high = len(order) // 2
    return {sid: (Label.HIGH if k < n_high else Label.LOW) for k, (sid, _) in enumerate(order)}


@dataclass(eq=False)
class LabeledCorpus:
    sessions: list
    excluded: list
    threshold: Optional[float]  # lowest High score

    @property
    def labels(self):
        return np.array([s.label for s in self.sessions], dtype=int)


def label_corpus(records: Sequence[SessionData]) -> LabeledCorpus:
    admitted = [r for r in records if r.admission.admit]
    labels = median_split([(r.id, r.score) for r in admitted])
    for r in admitted:
        r.label = int(labels[r.id])
    highs = [r.score for r in admitted if r.label == Label.HIGH]
    return LabeledCorpus(sorted(admitted, key=lambda r: r.id),
                         [r for r in records if not r.admission.admit],
                         min(highs) if highs else None)


def stratified_folds(ids: Sequence[str], labels: Sequence[int], k: int = 10,
                     seed: int = 0) -> list[list[str]]:
    """Shuffle each class by seed, then deal round-robin so folds stay balanced."""
    rng = np.random.default_rng(seed)
    ids = list(ids)
    labels = np.asarray(labels, dtype=int)
    folds = [[] for _ in range(k)]
    pos = 0
    for c in (Label.HIGH, Label.LOW):
        members = sorted(i for i, l in zip(ids, labels) if l == c)
        if len(members) < k:
            raise TooFewPerClass(f"class {Label(c).name} has {len(members)} units, need {k}")
        for j in rng.permutation(len(members)):
            folds[pos % k].append(members[j])
            pos += 1
    return folds


# ---------------------------------------------------------------- fitting

@dataclass(eq=False)
class FittedPipeline:
    """Feature selection, scaling, projection and a trained model."""

    classifier: str
    columns: list
    standardizer: Optional[Standardizer]
    pca: Optional[PcaModel]
    model: object
    seq_len: int = 20
    config_hash: str = ""
    seed: int = 0

    def transform(self, X):
        Z = np.asarray(X, dtype=float)[:, self.columns]
        if self.standardizer is not None:
            Z = self.standardizer.apply(Z)
        if self.pca is not None:
            Z = self.pca.transform(Z)
        return Z

    def predict_windows(self, X):
        return self.model.predict(self.transform(X))

    def predict_session(self, sd: SessionData) -> int:
        if self.classifier == "lstm":
            seq, m = pad_sequence(self.transform(sd.vectors), self.seq_len, sd.fractions)
            return int(self.model.predict(seq, m)[0])
        return vote(self.predict_windows(sd.vectors))

    def to_dict(self):
        return {"classifier": self.classifier, "feature_names": list(FEATURE_NAMES),
                "columns": [FEATURE_NAMES[c] for c in self.columns],
                "standardizer": None if self.standardizer is None else self.standardizer.to_dict(),
                "pca": None if self.pca is None else self.pca.to_dict(),
                "seq_len": self.seq_len, "config_hash": self.config_hash, "seed": self.seed,
                "model": self.model.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["classifier"], [FEATURE_NAMES.index(c) for c in d["columns"]],
                   None if d["standardizer"] is None else Standardizer.from_dict(d["standardizer"]),
                   None if d["pca"] is None else PcaModel.from_dict(d["pca"]),
                   model_from_dict(d["model"]), int(d["seq_len"]), d.get("config_hash", ""),
                   int(d.get("seed", 0)))


def vote(window_preds) -> int:
    """Session label by majority; an even split goes to High."""
    p = np.asarray(window_preds)
    return int(2 * int(p.sum()) >= len(p))


def lstm_params(cfg: PipelineConfig) -> LstmParams:
    return LstmParams(blocks=cfg.lstm_blocks, recurrent_dropout=cfg.lstm_dropout,
                      dense_units=cfg.lstm_dense, max_epochs=cfg.lstm_max_epochs,
                      learning_rate=cfg.lstm_lr, batch_size=cfg.lstm_batch,
                      patience=cfg.lstm_patience, min_improvement=cfg.lstm_min_improvement)


def fit_pipeline(classifier: str, train: Sequence[SessionData], cfg: PipelineConfig,
                 seed: int, rows: Optional[Sequence[np.ndarray]] = None) -> FittedPipeline:
    """Fit every stage on ``train`` only.

    ``rows`` optionally restricts each session to a subset of its windows
    (window-level folds).
    """
    if rows is None:
        rows = [np.arange(len(s.vectors)) for s in train]
    X = np.vstack([s.vectors[r] for s, r in zip(train, rows)])
    y = np.concatenate([np.full(len(r), s.label) for s, r in zip(train, rows)])
    cols = list(range(len(FEATURE_NAMES)))
    if cfg.feature_set == "cfs":
        chosen = cfs_select(X, y, FEATURE_NAMES)
        cols = sorted(FEATURE_NAMES.index(c) for c in chosen)
    Z = X[:, cols]
    std = pca = None
    if classifier in SCALED:
        std = fit_standardizer(Z, [FEATURE_NAMES[c] for c in cols])
        Z = std.apply(Z)
    if classifier == "svm":
        pca = pca_fit(Z, cfg.pca_variance)
        Z = pca.transform(Z)

    if classifier == "knn":
        model = train_knn(Z, y, cfg.knn_k)
    elif classifier == "gnb":
        model = train_gnb(Z, y)
    elif classifier == "rf":
        model = train_rf(Z, y, cfg.rf_trees, seed)
    elif classifier == "svm":
        model = train_svm_rbf(Z, y, cfg.svm_c, cfg.svm_gamma)
    elif classifier == "mlp":
        model = train_mlp(Z, y, cfg.mlp_hidden, cfg.mlp_lr, cfg.mlp_max_epochs, seed=seed)
    elif classifier == "lstm":
        fitted = FittedPipeline(classifier, cols, std, pca, None, cfg.lstm_seq_len)
        seqs, masks = zip(*(pad_sequence(fitted.transform(s.vectors), cfg.lstm_seq_len, s.fractions)
                            for s in train))
        data = SequenceDataset(np.array(seqs), np.array([s.label for s in train]),
                               np.array(masks), tuple(s.id for s in train))
        model = train_lstm(data, lstm_params(cfg), seed=seed)
    else:
        raise ValueError(f"unknown classifier {classifier!r}")
    return FittedPipeline(classifier, cols, std, pca, model, cfg.lstm_seq_len, cfg.hash, seed)


# ---------------------------------------------------------------- reports

@dataclass
class Granularity:
    fold_accuracies: list
    confusion: list  # rows: true Low/High, cols: predicted Low/High

    @property
    def mean(self):
        return float(np.mean(self.fold_accuracies))

    @property
    def n_units(self):
        return int(np.sum(self.confusion))

    def to_dict(self):
        return {"fold_accuracies": self.fold_accuracies, "mean_accuracy": self.mean,
                "confusion": self.confusion, "n_units": self.n_units}


def _granularity(per_fold) -> Granularity:
    accs, conf = [], np.zeros((2, 2), dtype=int)
    for truth, pred in per_fold:
        truth = np.asarray(truth, dtype=int)
        pred = np.asarray(pred, dtype=int)
        accs.append(float(np.mean(truth == pred)))
        np.add.at(conf, (truth, pred), 1)
    return Granularity(accs, conf.tolist())


@dataclass
class CvReport:
    classifier: str
    results: dict  # granularity tag -> Granularity
    baseline: Granularity
    folds: list
    config_hash: str
    seed: int
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {"classifier": self.classifier, "config_hash": self.config_hash, "seed": self.seed,
                "results": {k: v.to_dict() for k, v in self.results.items()},
                "baseline_always_high": self.baseline.to_dict(),
                "folds": self.folds, "config": self.config}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _fold_seed(seed, fold):
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def _run_fold(fold, classifier, train, test, cfg, train_rows=None, test_rows=None):
    fit_ids = {s.id for s in train}
    test_ids = {s.id for s in test}
    if train_rows is None and fit_ids & test_ids:
        raise LeakageError(f"fold {fold}: sessions {sorted(fit_ids & test_ids)} in both sets")
    pipe = fit_pipeline(classifier, train, cfg, _fold_seed(cfg.seed, fold), train_rows)
    out = {"fold": fold, "n_train_sessions": len(train), "n_test_sessions": len(test),
           "test_high": int(sum(s.label for s in test)),
           "test_low": int(sum(1 - s.label for s in test)),
           "columns": [FEATURE_NAMES[c] for c in pipe.columns],
           "leakage_checked": True}
    if pipe.pca is not None:
        out["pca_components"] = pipe.pca.retained_count
    if classifier == "lstm":
        truth = [s.label for s in test]
        out["session"] = (truth, [pipe.predict_session(s) for s in test])
        return out
    if test_rows is None:
        test_rows = [np.arange(len(s.vectors)) for s in test]
    win_truth, win_pred, s_truth, s_pred = [], [], [], []
    for s, r in zip(test, test_rows):
        p = pipe.predict_windows(s.vectors[r])
        win_truth += [s.label] * len(r)
        win_pred += p.tolist()
        s_truth.append(s.label)
        s_pred.append(vote(p))
    out["window"] = (win_truth, win_pred)
    if train_rows is None:
        out["session"] = (s_truth, s_pred)
    return out


def _window_level_splits(corpus: LabeledCorpus, k, seed):
    units, labels = [], []
    for s in corpus.sessions:
        for w in range(len(s.vectors)):
            units.append(f"{s.id}#{w:04d}")
            labels.append(s.label)
    folds = stratified_folds(units, labels, k, seed)
    splits = []
    for f in folds:
        test_units = set(f)
        tr, tr_rows, te, te_rows = [], [], [], []
        for s in corpus.sessions:
            mine = [f"{s.id}#{w:04d}" in test_units for w in range(len(s.vectors))]
            mine = np.array(mine, dtype=bool)
            if (~mine).any():
                tr.append(s)
                tr_rows.append(np.flatnonzero(~mine))
            if mine.any():
                te.append(s)
                te_rows.append(np.flatnonzero(mine))
        # every held-out window is absent from the fitting rows
        assert not any(set(a) & set(b) for s1, a in zip(tr, tr_rows)
                       for s2, b in zip(te, te_rows) if s1.id == s2.id)
        splits.append((tr, te, tr_rows, te_rows))
    return splits


def run_cv(corpus: LabeledCorpus, classifier: str, cfg: PipelineConfig = PipelineConfig()) -> CvReport:
    """Stratified k-fold evaluation; every fitted stage sees training folds only."""
    if classifier not in CLASSIFIERS:
        raise ValueError(f"unknown classifier {classifier!r}")
    if cfg.window_level_folds:
        if classifier == "lstm":
            raise ValueError("the LSTM classifies whole sessions; window-level folds do not apply")
        splits = _window_level_splits(corpus, cfg.cv_folds, cfg.seed)
    else:
        folds = stratified_folds([s.id for s in corpus.sessions], corpus.labels,
                                 cfg.cv_folds, cfg.seed)
        by_id = {s.id: s for s in corpus.sessions}
        splits = []
        for f in folds:
            test = [by_id[i] for i in sorted(f)]
            held = set(f)
            splits.append(([s for s in corpus.sessions if s.id not in held], test, None, None))

    args = [(k, classifier, tr, te, cfg, trr, ter) for k, (tr, te, trr, ter) in enumerate(splits)]
    if cfg.jobs and cfg.jobs > 1:
        from joblib import Parallel, delayed
        outs = Parallel(n_jobs=cfg.jobs)(delayed(_run_fold)(*a) for a in args)
    else:
        outs = []
        for a in args:
            outs.append(_run_fold(*a))
            log.info("%s fold %d/%d done", classifier, a[0] + 1, len(args))

    base_tag = "session" if "session" in outs[0] else "window"
    baseline = _granularity([(o[base_tag][0], [1] * len(o[base_tag][0])) for o in outs])
    results = {}
    for tag in ("window", "session"):
        if tag in outs[0]:
            results[tag] = _granularity([o.pop(tag) for o in outs])
    return CvReport(classifier, results, baseline, outs, cfg.hash, cfg.seed,
                    json.loads(cfg.to_json()))


def render_report(reports: Sequence[CvReport]) -> str:
    lines = [f"{'Algorithm':<34}{'session acc':>12}{'window acc':>12}"]
    names = {"rf": "Random Forest", "svm": "PCA + SVM (RBF)", "knn": "k-nearest neighbour (k=3)",
             "gnb": "Naive Bayes", "mlp": "Multilayer perceptron", "lstm": "LSTM"}
    for r in reports:
        s = r.results.get("session")
        w = r.results.get("window")
        lines.append(f"{names.get(r.classifier, r.classifier):<34}"
                     f"{(f'{100 * s.mean:.2f}%' if s else '-'):>12}"
                     f"{(f'{100 * w.mean:.2f}%' if w else '-'):>12}")
    if reports:
        b = reports[0].baseline
        lines.append(f"{'constant High (baseline)':<34}{f'{100 * b.mean:.2f}%':>12}{'':>12}")
        lines.append(f"config {reports[0].config_hash}  seed {reports[0].seed}")
    return "\n".join(lines)


@dataclass
class GridReport:
    blocks: list
    dropouts: list
    accuracy: list  # [block][dropout]
    config_hash: str
    seed: int

    def to_dict(self):
        return {"blocks": self.blocks, "dropouts": self.dropouts, "mean_accuracy": self.accuracy,
                "config_hash": self.config_hash, "seed": self.seed,
                "reference_optimum": {"blocks": REFERENCE_OPTIMUM[0],
                                      "dropout": REFERENCE_OPTIMUM[1],
                                      "accuracy_percent": REFERENCE_OPTIMUM[2]}}

    def render(self) -> str:
        head = f"{'LSTM Blocks/Dropout':<22}" + "".join(f"{d:>10.2f}" for d in self.dropouts)
        lines = [head]
        for b, row in zip(self.blocks, self.accuracy):
            cells = []
            for d, a in zip(self.dropouts, row):
                mark = "*" if (b, d) == REFERENCE_OPTIMUM[:2] else " "
                cells.append(f"{100 * a:>8.2f}%{mark}")
            lines.append(f"{f'{b} LSTM Blocks':<22}" + "".join(cells))
        lines.append(f"* ({REFERENCE_OPTIMUM[0]}, {REFERENCE_OPTIMUM[1]}): published reference "
                     f"optimum, {REFERENCE_OPTIMUM[2]:.2f}% on the original field dataset "
                     "(not expected on synthetic data)")
        lines.append(f"config {self.config_hash}  seed {self.seed}")
        return "\n".join(lines)


def grid_report(corpus: LabeledCorpus, blocks: Sequence[int] = (50, 100, 150, 200, 250),
                dropouts: Sequence[float] = (0.0, 0.2, 0.4, 0.6),
                cfg: PipelineConfig = PipelineConfig()) -> GridReport:
    acc = []
    for b in blocks:
        row = []
        for d in dropouts:
            rep = run_cv(corpus, "lstm", cfg.updated(lstm_blocks=int(b), lstm_dropout=float(d)))
            row.append(rep.results["session"].mean)
        acc.append(row)
    return GridReport(list(blocks), list(dropouts), acc, cfg.hash, cfg.seed)
