import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from seqchoice.errors import KTooLarge, TooFewMinority
from seqchoice.prep import (
    BalanceConfig, balance_dataset, discretize, entropy, mrmr_select, mutual_information, smote, standardize,
    synthetic_count,
)


def test_standardize_examples():
    Z, stats = standardize(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]))
    np.testing.assert_allclose(Z[:, 0], [-math.sqrt(1.5), 0, math.sqrt(1.5)])
    assert stats.mean[0] == 2.0
    assert stats.sd[1] == 0.0 and stats.passthrough[1]
    np.testing.assert_array_equal(Z[:, 1], [5.0, 5.0, 5.0])
    Zt, _ = standardize(np.array([[4.0, 1.0]]), stats)
    np.testing.assert_allclose(Zt, [[2 / stats.sd[0], 1.0]])


def test_standardize_population_sd_on_unit_spread():
    Z, stats = standardize(np.array([[1.0], [3.0]]))
    assert stats.mean[0] == 2.0 and stats.sd[0] == 1.0
    np.testing.assert_array_equal(Z[:, 0], [-1.0, 1.0])


@given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 4)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_standardize_idempotent(X):
    Z, stats = standardize(X)
    Z2, _ = standardize(Z)
    np.testing.assert_allclose(Z2, Z, atol=1e-9)
    np.testing.assert_allclose(stats.apply(X), Z)


def test_mutual_information_examples():
    y = np.array([0, 1] * 50)
    assert mutual_information(np.zeros(100), y) == 0.0
    assert math.isclose(mutual_information(y, y), math.log(2), rel_tol=1e-12)
    assert math.isclose(mutual_information(1 - y, y), math.log(2), rel_tol=1e-12)


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 3)), min_size=1, max_size=200))
def test_mutual_information_properties(pairs):
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    mi = mutual_information(x, y)
    assert mi >= -1e-12
    assert math.isclose(mi, mutual_information(y, x), abs_tol=1e-12)
    assert mi <= min(entropy(x), entropy(y)) + 1e-12


def test_discretize_equal_frequency():
    dm = discretize(np.arange(100, dtype=float)[:, None], 10)
    assert dm.bins[0] == 10
    assert np.bincount(dm.codes[:, 0]).tolist() == [10] * 10
    few = discretize(np.array([[0.0], [1.0], [1.0], [2.0]]), 10)
    assert few.codes[:, 0].tolist() == [0, 1, 1, 2]


def test_mrmr_drops_redundant_copy():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 1000)
    f1 = np.where(rng.random(1000) < 0.1, 1 - y, y)
    X = np.c_[f1, f1, rng.integers(0, 2, 1000)].astype(float)
    sel = mrmr_select(discretize(X, 10, ["f1", "f2", "f3"]), y, 2)
    assert sel.features == ("f1", "f3")


def test_mrmr_exact_label_copy_is_a_tie():
    # with f1 == y the copy and the noise column both score exactly zero, so index order decides
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 1000)
    X = np.c_[y, y, rng.integers(0, 2, 1000)].astype(float)
    sel = mrmr_select(discretize(X, 10, ["f1", "f2", "f3"]), y, 2)
    assert sel.scores[1] == 0.0
    assert sel.features == ("f1", "f2")


def test_mrmr_first_pick_and_ties():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 2, 500)
    X = np.c_[rng.normal(size=500), y + rng.normal(0, 0.1, 500), rng.normal(size=500)]
    assert mrmr_select(discretize(X), y, 1).indices == (1,)
    same = np.tile(rng.normal(size=(500, 1)), (1, 4))
    assert mrmr_select(discretize(same), y, 4).indices == (0, 1, 2, 3)
    with pytest.raises(KTooLarge):
        mrmr_select(discretize(same), y, 5)


def test_smote_on_two_point_segment():
    out = smote(np.array([[0.0, 0.0], [1.0, 1.0]]), 1, 200, seed=3)
    assert out.shape == (200, 2)
    np.testing.assert_array_equal(out[:, 0], out[:, 1])
    assert out.min() >= 0.0 and out.max() <= 1.0
    np.testing.assert_array_equal(out, smote(np.array([[0.0, 0.0], [1.0, 1.0]]), 1, 200, seed=3))


def test_smote_needs_more_minority_than_k():
    with pytest.raises(TooFewMinority):
        smote(np.zeros((3, 2)), 5, 10)


@pytest.mark.parametrize("n_major, n_minor, ratio, expected", [
    (100, 10, 1.0, 90), (2000, 100, 1.0, 1900), (2000, 100, 0.5, 900), (50, 50, 1.0, 0)])
def test_balance_counts(n_major, n_minor, ratio, expected):
    assert synthetic_count(n_minor, n_major, ratio) == expected
    rng = np.random.default_rng(0)
    X = rng.normal(size=(n_major + n_minor, 2))
    y = np.r_[np.zeros(n_major, int), np.ones(n_minor, int)]
    Xb, yb = balance_dataset(X, y, BalanceConfig(5, ratio, seed=1))
    assert len(yb) - len(y) == expected
    if expected == 0:
        assert Xb is X and yb is y


def test_balance_handles_minority_label_zero():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(120, 2))
    y = np.r_[np.zeros(20, int), np.ones(100, int)]
    _, yb = balance_dataset(X, y, BalanceConfig(3, 1.0, 0))
    assert (yb == 0).sum() == 100


@given(st.integers(6, 40), st.integers(1, 5), st.integers(0, 10_000))
def test_smote_rows_stay_in_minority_box(m, k, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(m, 3))
    out = smote(M, k, 50, seed=seed)
    assert np.all(out >= M.min(0) - 1e-12) and np.all(out <= M.max(0) + 1e-12)


def test_balance_base_selector_restricts_seeds():
    X = np.r_[np.zeros((50, 1)), np.arange(10, dtype=float)[:, None]]
    y = np.r_[np.zeros(50, int), np.ones(10, int)]
    cfg = BalanceConfig(2, 1.0, 0, base_selector=lambda minority, majority: np.array([0]))
    Xb, _ = balance_dataset(X, y, cfg)
    # every synthetic row starts at minority row 0 (value 0) towards one of its two nearest neighbours
    assert np.all((Xb[60:, 0] >= 0.0) & (Xb[60:, 0] <= 2.0))
