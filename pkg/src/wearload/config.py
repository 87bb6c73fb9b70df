"""Pipeline configuration: every tunable with its default, plus a stable hash."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

CLASSIFIERS = ("knn", "gnb", "rf", "svm", "mlp", "lstm")


def _f(default, help_):
    return field(default=default, metadata={"help": help_})


@dataclass(frozen=True)
class PipelineConfig:
    artifact_window_pts: int = _f(10, "unflagged beats in the local artifact average")
    artifact_threshold: float = _f(0.20, "relative deviation above which a beat is an artifact")
    window_s: int = _f(120, "analysis window length, seconds")
    stride_s: int = _f(60, "window stride, seconds (50% overlap)")
    max_interpolated: float = _f(0.10, "drop windows with a larger interpolated-beat fraction")
    tachogram_hz: float = _f(4.0, "even resampling rate for spectral features")
    windows_per_session: Optional[int] = _f(
        None, "cap on least-interpolated windows per session; None keeps all")
    raw_tlx: bool = _f(False, "score questionnaires as the unweighted mean of ratings")
    feature_set: str = _f("all19", "all19 or cfs")
    pca_variance: float = _f(0.80, "variance retained by PCA in front of the SVM")
    classifier: str = _f("lstm", "one of " + ", ".join(CLASSIFIERS) + ", or all")
    knn_k: int = _f(3, "neighbours for kNN")
    rf_trees: int = _f(100, "trees in the random forest")
    svm_c: float = _f(1.0, "SVM soft-margin penalty")
    svm_gamma: Optional[float] = _f(None, "RBF width; None means 1/input dimension")
    mlp_hidden: int = _f(5, "MLP hidden sigmoid units")
    mlp_lr: float = _f(0.1, "MLP gradient-descent learning rate")
    mlp_max_epochs: int = _f(500, "MLP epoch cap")
    lstm_blocks: int = _f(200, "LSTM hidden units")
    lstm_dropout: float = _f(0.2, "LSTM recurrent dropout")
    lstm_dense: int = _f(25, "units in the ReLU layer after the LSTM")
    lstm_max_epochs: int = _f(500, "LSTM epoch cap")
    lstm_batch: int = _f(16, "LSTM mini-batch size")
    lstm_lr: float = _f(1e-3, "Adam step size")
    lstm_seq_len: int = _f(20, "windows per LSTM input sequence")
    lstm_patience: int = _f(20, "epochs without enough loss improvement before stopping (0 = never)")
    lstm_min_improvement: float = _f(1e-3, "loss improvement required within the patience span")
    cv_folds: int = _f(10, "stratified cross-validation folds")
    window_level_folds: bool = _f(False, "split folds by window instead of by session")
    seed: int = _f(0, "master random seed")
    jobs: int = _f(1, "parallel workers for sessions and folds")

    def to_json(self) -> str:
        # jobs never changes results, so it stays out of the hash
        d = {k: v for k, v in asdict(self).items() if k != "jobs"}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def updated(self, **kw) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def validate(self):
        if self.feature_set not in ("all19", "cfs"):
            raise ValueError(f"feature_set must be all19 or cfs, not {self.feature_set!r}")
        if self.classifier not in CLASSIFIERS + ("all",):
            raise ValueError(f"unknown classifier {self.classifier!r}")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be at least 2")
        return self


def load_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return PipelineConfig(**d).validate()
