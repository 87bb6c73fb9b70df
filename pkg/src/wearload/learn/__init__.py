"""Classifiers: kNN, Gaussian NB, random forest, RBF SVM, MLP and LSTM."""
from .forest import RandomForest, predict_rf, train_rf
from .lstm import Lstm, LstmParams, SequenceDataset, pad_sequence, predict_lstm, train_lstm
from .mlp import Mlp, predict_mlp, train_mlp
from .simple import GaussianNB, Knn, predict_gnb, predict_knn, train_gnb, train_knn
from .svm import SvmRbf, predict_svm, train_svm_rbf

MODEL_TYPES = {cls.kind: cls for cls in (Knn, GaussianNB, RandomForest, SvmRbf, Mlp, Lstm)}


def model_from_dict(d):
    return MODEL_TYPES[d["kind"]].from_dict(d)
