import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from seqchoice.bench_models import (
    ConstantModel, EnsembleModel, LinearModel, NeighborIndex, bootstrap_index, build_tree, choice_probabilities,
    knn_predict, logistic_loss_grad, logistic_objective, train_bagged_logistic, train_lda, train_linear_svm,
    train_logistic, train_random_forest,
)
from seqchoice.errors import DegenerateCovariance, DimensionMismatch, KTooLarge, SingleClass
from seqchoice.rng import derive_seed
from seqchoice.serialize import dumps, loads


def _model(w, b):
    return LinearModel(np.asarray(w, dtype=float), float(b))


def test_logit_examples():
    assert _model([0.0], 0.0).predict_proba([[3.0]])[0] == 0.5
    assert math.isclose(_model([1.0], 0.0).predict_proba([[math.log(3)]])[0], 0.75, rel_tol=1e-15)
    assert math.isclose(_model([1.0], 0.0).predict_proba([[-math.log(3)]])[0], 0.25, rel_tol=1e-15)
    with pytest.raises(DimensionMismatch):
        _model([1.0, 2.0], 0.0).predict_proba([[1.0]])


@given(st.floats(-30, 30), st.floats(1e-3, 5))
def test_logit_monotone(u, du):
    m = _model([1.0], 0.0)
    p = m.predict_proba([[u], [u + du]])
    assert p[1] > p[0]
    assert 0.0 < p[0] < 1.0


@given(arrays(np.float64, st.integers(2, 6), elements=st.floats(-30, 30)), st.floats(-100, 100))
def test_softmax_shift_invariance(v, c):
    np.testing.assert_allclose(choice_probabilities(v + c), choice_probabilities(v), rtol=1e-12, atol=1e-300)


def test_two_choice_softmax_equals_sigmoid():
    u = np.linspace(-5, 5, 11)
    two = choice_probabilities(np.c_[np.zeros_like(u), u])[:, 1]
    np.testing.assert_allclose(two, _model([1.0], 0.0).predict_proba(u[:, None]), rtol=1e-14)


def test_logistic_gradient_matches_central_differences():
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(40, 3)), rng.integers(0, 2, 40).astype(float)
    for penalty in ("none", "l2"):
        w, b = rng.normal(size=3), float(rng.normal())
        _, gw, gb = logistic_loss_grad(w, b, X, y, penalty, 0.3)
        h = 1e-6
        num = []
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            num.append((logistic_objective(w + e, b, X, y, penalty, 0.3)
                        - logistic_objective(w - e, b, X, y, penalty, 0.3)) / (2 * h))
        num.append((logistic_objective(w, b + h, X, y, penalty, 0.3)
                    - logistic_objective(w, b - h, X, y, penalty, 0.3)) / (2 * h))
        ana = np.r_[gw, gb]
        assert np.max(np.abs(ana - num) / np.maximum(np.abs(ana), 1e-8)) < 1e-6


def test_separable_l2_fit_beats_grid_oracle():
    x = np.array([-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0])[:, None]
    y = (x[:, 0] > 0).astype(int)
    m = train_logistic(x, y, "l2", 1.0)
    assert np.isfinite(m.weights).all()
    assert np.mean((m.predict_proba(x) > 0.5) == y) == 1.0
    grid = min(logistic_objective(np.array([w]), b, x, y, "l2", 1.0)
               for w in np.linspace(0, 5, 101) for b in np.linspace(-2, 2, 81))
    assert logistic_objective(m.weights, m.bias, x, y, "l2", 1.0) <= grid + 1e-9
    assert m.info["converged"]


def test_large_penalty_predicts_prior():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(300, 2))
    y = (X[:, 0] + rng.normal(0, 0.5, 300) > 0.6).astype(int)
    m = train_logistic(X, y, "l2", 1e6)
    assert np.abs(m.weights).max() < 1e-4
    assert abs(m.predict_proba(X).mean() - y.mean()) < 1e-3


def test_l1_zeroes_noise_feature():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(400, 2))
    y = (2 * X[:, 0] + rng.logistic(size=400) > 0).astype(int)
    l1 = train_logistic(X, y, "l1", 0.05)
    l2 = train_logistic(X, y, "l2", 0.05)
    assert abs(l1.weights[1]) < 1e-3
    assert abs(l2.weights[1]) > abs(l1.weights[1])
    assert l1.weights[0] > 0.5


def test_single_class_rejected():
    with pytest.raises(SingleClass):
        train_logistic(np.zeros((5, 1)), np.ones(5))
    with pytest.raises(SingleClass):
        train_linear_svm(np.zeros((5, 1)), np.zeros(5))


def test_bagging_single_member_is_one_bootstrap_fit():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(100, 2))
    y = (X[:, 0] > 0).astype(int)
    ens = train_bagged_logistic(X, y, n_members=1, seed=11)
    idx = bootstrap_index(100, derive_seed(11, "bag/0"))
    ref = train_logistic(X[idx], y[idx], "l2", 1e-4, max_iter=1000)
    np.testing.assert_array_equal(ens.members[0].weights, ref.weights)
    again = train_bagged_logistic(X, y, n_members=1, seed=11)
    np.testing.assert_array_equal(again.predict_proba(X), ens.predict_proba(X))


def test_bagging_unanimous_on_duplicated_data():
    X = np.repeat(np.array([[-1.0], [1.0]]), 500, axis=0)
    y = np.repeat([0, 1], 500)
    p = train_bagged_logistic(X, y, n_members=9, seed=0).predict_proba(np.array([[-1.0], [1.0]]))
    np.testing.assert_array_equal(p, [0.0, 1.0])


@pytest.mark.slow
def test_bagging_reduces_variance_across_seeds():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 2))
    y = (X[:, 0] + rng.normal(0, 1.0, 60) > 0).astype(int)
    full = train_logistic(X, y, "l2", 1e-4)
    q = np.array([[-full.bias / full.weights[0], 0.0]])
    single, bagged = [], []
    for s in range(50):
        single.append(train_bagged_logistic(X, y, 1, seed=s, max_iter=300).predict_proba(q)[0])
        bagged.append(train_bagged_logistic(X, y, 100, seed=s, max_iter=300).predict_proba(q)[0])
    assert np.var(bagged) <= np.var(single)


def test_lda_bisector_and_prior_shift():
    X = np.array([[-1.0, 1.0], [-1.0, -1.0], [-2.0, 0.0], [0.0, 0.0],
                  [1.0, 1.0], [1.0, -1.0], [2.0, 0.0], [0.0, 0.0]])
    X[3] = [-1.0, 0.0]
    X[7] = [1.0, 0.0]
    y = np.r_[np.zeros(4, int), np.ones(4, int)]
    m = train_lda(X, y)
    assert abs(m.bias) < 1e-12 and abs(m.weights[1]) < 1e-12 and m.weights[0] > 0
    Xs = np.r_[np.repeat(X[:4], 9, axis=0), X[4:]]
    ys = np.r_[np.zeros(36, int), np.ones(4, int)]
    ms = train_lda(Xs, ys)
    # same class means, prior 0.9/0.1: bias moves by log(0.1/0.9) relative to the equal-prior discriminant
    eq = -0.5 * float((Xs[:36].mean(0) + Xs[36:].mean(0)) @ ms.weights)
    assert math.isclose(ms.bias - eq, math.log(0.1 / 0.9), rel_tol=1e-12)


def test_lda_degenerate_class():
    with pytest.raises(DegenerateCovariance):
        train_lda(np.array([[0.0], [1.0], [2.0]]), np.array([0, 0, 1]))


def test_lda_recovers_bayes_direction():
    rng = np.random.default_rng(5)
    cov = np.array([[2.0, 0.8], [0.8, 1.0]])
    L = np.linalg.cholesky(cov)
    mu0, mu1 = np.array([0.0, 0.0]), np.array([1.0, 0.5])
    y = rng.integers(0, 2, 10_000)
    X = np.where(y[:, None] == 1, mu1, mu0) + rng.normal(size=(10_000, 2)) @ L.T
    w = train_lda(X, y).weights
    bayes = np.linalg.solve(cov, mu1 - mu0)
    angle = math.degrees(math.acos(w @ bayes / np.linalg.norm(w) / np.linalg.norm(bayes)))
    assert angle < 5.0


def test_knn_examples():
    X = np.array([[0.0], [1.0], [2.0], [10.0]])
    idx = NeighborIndex(X, np.array([1, 1, 0, 0]))
    assert knn_predict(idx, [[0.9]], 1)[0] == 1.0
    assert knn_predict(idx, [[2.0]], 1)[0] == 0.0
    assert math.isclose(knn_predict(idx, [[1.0]], 3)[0], 2 / 3)
    with pytest.raises(KTooLarge):
        knn_predict(idx, [[0.0]], 5)
    # 0.5 sits exactly between rows 0 and 1; the lower index wins
    tie = NeighborIndex(np.array([[0.0], [1.0]]), np.array([0, 1]))
    assert knn_predict(tie, [[0.5]], 1)[0] == 0.0


def test_knn_kdtree_path_matches_brute_force():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(3000, 3))
    y = rng.integers(0, 2, 3000)
    Q = rng.normal(size=(1500, 3))
    idx = NeighborIndex(X, y)
    fast = knn_predict(idx, Q, 7)
    d2 = ((Q[:, None, :] - X[None]) ** 2).sum(2)
    brute = y[np.argsort(d2, axis=1, kind="stable")[:, :7]].mean(1)
    np.testing.assert_array_equal(fast, brute)


def test_svm_examples():
    x = np.array([[-1.0], [1.0]])
    y = np.array([0, 1])
    m = train_linear_svm(x, y, C=100.0, lam=1.0, max_iter=5000)
    assert abs(-m.bias / m.weights[0]) <= 0.1
    zero = train_linear_svm(x, y, C=0.0)
    np.testing.assert_array_equal(zero.weights, [0.0])
    rng = np.random.default_rng(7)
    X = rng.normal(size=(80, 2))
    yy = (X @ [1.0, -0.5] > 0).astype(int)
    a = train_linear_svm(X, yy, C=1.0)
    b = train_linear_svm(X, 1 - yy, C=1.0)
    np.testing.assert_allclose(a.weights, -b.weights, atol=1e-3)


def test_tree_single_midpoint_split():
    x = np.array([[0.0], [1.0], [3.0], [4.0]])
    y = np.array([0, 0, 1, 1])
    forest = train_random_forest(x, y, n_trees=1, max_depth=12, min_leaf=1, bootstrap=False)
    tree = forest.members[0]
    assert tree.n_splits == 1
    assert tree.threshold[0] == 2.0
    np.testing.assert_array_equal(forest.predict_proba(x), y)


def test_forest_constant_labels_and_vote_grid():
    x = np.arange(10, dtype=float)[:, None]
    f = train_random_forest(x, np.ones(10), n_trees=3, seed=1)
    assert all(t.n_splits == 0 for t in f.members)
    np.testing.assert_array_equal(f.predict_proba(x), 1.0)
    rng = np.random.default_rng(8)
    X = rng.normal(size=(200, 3))
    y = (X[:, 0] * X[:, 1] > 0).astype(int)
    f7 = train_random_forest(X, y, n_trees=7, seed=3)
    p = f7.predict_proba(X)
    np.testing.assert_allclose(p * 7, np.round(p * 7), atol=1e-12)
    np.testing.assert_array_equal(p, train_random_forest(X, y, n_trees=7, seed=3).predict_proba(X))


@pytest.mark.slow
def test_more_trees_generalize_better_on_xor():
    wins = 0
    for s in range(20):
        rng = np.random.default_rng(100 + s)
        X = rng.uniform(-1, 1, size=(400, 2))
        y = ((X[:, 0] * X[:, 1] > 0) ^ (rng.random(400) < 0.1)).astype(int)
        tr, te = slice(0, 200), slice(200, 400)
        acc = [np.mean((train_random_forest(X[tr], y[tr], n_trees=n, seed=s).predict_proba(X[te]) > 0.5) == y[te])
               for n in (1, 101)]
        wins += acc[1] >= acc[0]
    assert wins >= 16


def test_build_tree_respects_min_leaf():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(100, 2))
    y = rng.integers(0, 2, 100)
    t = build_tree(X, y, max_depth=12, min_leaf=5)
    leaves = t.feature < 0
    assert np.all(t.n_samples[leaves] >= 5)
    assert np.all(np.isfinite(t.threshold[~leaves]))


def test_serialization_round_trip_is_bit_exact():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] > 0).astype(int)
    models = [train_logistic(X, y, "l2", 0.1), train_lda(X, y), train_linear_svm(X, y),
              train_bagged_logistic(X, y, 3, seed=1), train_random_forest(X, y, 3, seed=1),
              NeighborIndex(X, y, 5), ConstantModel(1.0),
              EnsembleModel([ConstantModel(0.0), train_logistic(X, y)], "bagged_logistic")]
    for m in models:
        text = dumps(m, ["a", "b", "c"])
        back, names = loads(text)
        assert names == ["a", "b", "c"]
        np.testing.assert_array_equal(back.predict_proba(X), m.predict_proba(X))
        assert dumps(back, names) == text
