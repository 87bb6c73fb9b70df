import json

import numpy as np
import pytest

from wearload.learn import (MODEL_TYPES, model_from_dict, predict_gnb, predict_knn, predict_mlp,
                            predict_rf, predict_svm, train_gnb, train_knn, train_mlp, train_rf,
                            train_svm_rbf)
from wearload.learn import mlp as mlp_mod
from wearload.learn.forest import build_tree
from wearload.learn.simple import DegenerateClass, EmptyTrainingSet


def two_blobs(rng, n=40, d=4, sep=10.0):
    X = np.vstack([rng.normal(0, 1, (n, d)), rng.normal(sep, 1, (n, d))])
    y = np.array([0] * n + [1] * n)
    return X, y


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b)))


# -- kNN

def test_knn_query_equal_to_low_row():
    X = np.array([[0.0, 0], [0.1, 0], [0, 0.1], [5, 5], [5.1, 5]])
    y = np.array([0, 0, 0, 1, 1])
    assert predict_knn(train_knn(X, y), X[:1]).tolist() == [0]


def test_knn_two_clusters(rng):
    X, y = two_blobs(rng, d=19)
    assert predict_knn(train_knn(X, y), np.full((1, 19), 0.3)).tolist() == [0]


def test_knn_single_class(rng):
    X = rng.normal(size=(10, 3))
    m = train_knn(X, np.ones(10, dtype=int))
    assert set(predict_knn(m, rng.normal(size=(20, 3)))) == {1}


def test_knn_distance_ties_use_lower_index():
    # four rows at the same distance; the first three decide
    X = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]])
    y = np.array([1, 1, 0, 0])
    assert predict_knn(train_knn(X, y), [[0.0, 0.0]]).tolist() == [1]
    assert predict_knn(train_knn(X[::-1], y[::-1]), [[0.0, 0.0]]).tolist() == [0]


def test_knn_empty():
    with pytest.raises(EmptyTrainingSet):
        train_knn(np.zeros((0, 3)), np.zeros(0))


# -- Gaussian NB

def test_gnb_midpoint_tie_goes_low():
    X = np.array([[-1.0], [-3.0], [1.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    m = train_gnb(X, y)
    assert np.allclose(m.predict_proba([[0.0]]), [[0.5, 0.5]])
    assert predict_gnb(m, [[0.0]]).tolist() == [0]


def test_gnb_separated_classes(rng):
    X, y = two_blobs(rng, n=200, d=2)
    m = train_gnb(X, y)
    p = m.predict_proba([[10.0, 10.0]])[0]
    assert p[1] > 0.99


def test_gnb_constant_feature_floored(rng):
    X, y = two_blobs(rng, d=2)
    X[:, 1] = 3.0
    m = train_gnb(X, y)
    assert np.all(m.variances[:, 1] == 1e-9)
    assert np.all(np.isfinite(m.predict_proba(X)))


def test_gnb_needs_both_classes(rng):
    with pytest.raises(DegenerateClass):
        train_gnb(rng.normal(size=(5, 2)), np.zeros(5))


# -- random forest

def test_rf_axis_aligned(rng):
    X = rng.uniform(0, 10, (300, 5))
    y = (X[:, 0] > 5).astype(int)
    m = train_rf(X, y, 30, seed=1)
    Xt = rng.uniform(0, 10, (500, 5))
    assert np.mean(predict_rf(m, Xt) == (Xt[:, 0] > 5)) >= 0.95


def test_rf_beats_single_tree_on_training_data(rng):
    X = rng.normal(size=(150, 6))
    y = (X[:, 0] + X[:, 1] ** 2 + rng.normal(0, 0.8, 150) > 1).astype(int)
    forest = np.mean([np.mean(predict_rf(train_rf(X, y, 25, seed=s), X) == y) for s in range(5)])
    single = np.mean([np.mean(predict_rf(train_rf(X, y, 1, seed=s), X) == y) for s in range(5)])
    assert forest >= single


def test_rf_constant_features_majority():
    X = np.ones((40, 3))
    y = np.array([1] * 30 + [0] * 10)
    assert set(predict_rf(train_rf(X, y, 15, seed=0), X)) == {1}


def test_tree_grows_to_purity(rng):
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] * X[:, 1] > 0).astype(int)
    t = build_tree(X, y, 3, np.random.default_rng(0))
    assert np.array_equal(t.predict(X), y)


def test_rf_seeded(rng):
    X, y = two_blobs(rng, sep=1.0)
    a = train_rf(X, y, 10, seed=3).vote_fraction(X)
    b = train_rf(X, y, 10, seed=3).vote_fraction(X)
    assert np.array_equal(a, b)


# -- SVM

def test_svm_linearly_separable(rng):
    X, y = two_blobs(rng, n=30, d=2, sep=6)
    m = train_svm_rbf(X, y, C=10, gamma=0.5)
    assert m.converged
    assert np.mean(predict_svm(m, X) == y) == 1.0


def test_svm_xor(rng):
    X = rng.uniform(-1, 1, (200, 2))
    y = (X[:, 0] * X[:, 1] > 0).astype(int)
    m = train_svm_rbf(X, y, C=100, gamma=2.0)
    assert np.mean(predict_svm(m, X) == y) >= 0.95


def test_svm_two_points_midpoint():
    m = train_svm_rbf(np.array([[0.0, 0.0], [2.0, 2.0]]), np.array([0, 1]))
    assert abs(m.decision_function([[1.0, 1.0]])[0]) < 1e-6
    assert m.decision_function([[0.0, 0.0]])[0] < 0 < m.decision_function([[2.0, 2.0]])[0]


def test_svm_kkt_at_solution(rng):
    X = rng.normal(size=(80, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=80) > 0).astype(int)
    C = 1.0
    m = train_svm_rbf(X, y, C=C, tol=1e-6)
    ys = np.where(y > 0, 1, -1)
    alpha = np.zeros(80)
    # recover alphas by matching support vectors to rows
    for sv, coef in zip(m.support_vectors, m.dual_coef):
        alpha[np.flatnonzero((X == sv).all(axis=1))[0]] = abs(coef)
    assert abs(np.sum(alpha * ys)) < 1e-8
    margin = ys * m.decision_function(X)
    free = (alpha > 1e-8) & (alpha < C - 1e-8)
    assert np.all(np.abs(margin[free] - 1) < 1e-3)
    assert np.all(margin[alpha < 1e-8] > 1 - 1e-3)


# -- MLP

def test_mlp_gradient_check(rng):
    X = rng.normal(size=(12, 4))
    y = rng.integers(0, 2, 12).astype(float)
    params = {"W1": rng.normal(size=(4, 5)), "b1": rng.normal(size=5),
              "w2": rng.normal(size=5), "b2": np.array(0.3)}
    _, g = mlp_mod.loss_and_grad(params, X, y)
    eps = 1e-5
    for k, v in params.items():
        num = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            old = v[idx]
            v[idx] = old + eps
            lp, _ = mlp_mod.loss_and_grad(params, X, y)
            v[idx] = old - eps
            lm, _ = mlp_mod.loss_and_grad(params, X, y)
            v[idx] = old
            num[idx] = (lp - lm) / (2 * eps)
        assert rel_err(g[k], num) < 1e-4, k


def test_mlp_separable(rng):
    X, y = two_blobs(rng, d=3, sep=4)
    m = train_mlp((X - X.mean(0)) / X.std(0), y, seed=0)
    assert np.mean(predict_mlp(m, (X - X.mean(0)) / X.std(0)) == y) >= 0.95


def test_mlp_zero_init_stays_symmetric(rng):
    X, y = two_blobs(rng, d=3, sep=2)
    params = {"W1": np.zeros((3, 5)), "b1": np.zeros(5), "w2": np.zeros(5), "b2": np.array(0.0)}
    for _ in range(50):
        _, g = mlp_mod.loss_and_grad(params, X, y)
        for k in params:
            params[k] = params[k] - 0.1 * g[k]
    # every hidden unit is still a copy of the first: zero init cannot break symmetry
    assert np.allclose(params["W1"], params["W1"][:, :1])
    assert np.allclose(params["w2"], params["w2"][0])


# -- serialisation

@pytest.mark.parametrize("kind", ["knn", "gnb", "rf", "svm", "mlp"])
def test_model_roundtrip_bit_identical(kind, rng):
    X, y = two_blobs(rng, n=30, d=5, sep=1.5)
    trainers = {"knn": lambda: train_knn(X, y), "gnb": lambda: train_gnb(X, y),
                "rf": lambda: train_rf(X, y, 10, seed=2), "svm": lambda: train_svm_rbf(X, y),
                "mlp": lambda: train_mlp(X, y, max_epochs=50)}
    m = trainers[kind]()
    back = model_from_dict(json.loads(json.dumps(m.to_dict())))
    assert isinstance(back, MODEL_TYPES[kind])
    Q = rng.normal(0.7, 1.5, (50, 5))
    assert np.array_equal(back.predict(Q), m.predict(Q))
    if hasattr(m, "predict_proba"):
        assert np.array_equal(back.predict_proba(Q), m.predict_proba(Q))
