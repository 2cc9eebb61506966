"""Benchmark random-utility classifiers.

Every fitted model exposes ``predict_proba(X) -> P(on)``; for the linear
family that probability is the two-choice logit of the linear utility.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCovariance, DimensionMismatch, KTooLarge, SingleClass
from .rng import derive_seed
from .serialize import register

MAX_ITER = 10_000
GRAD_TOL = 1e-6
LDA_RIDGE = 1e-6


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def choice_probabilities(utilities) -> np.ndarray:
    """Multinomial logit over the last axis: ``exp(v_j) / sum_s exp(v_s)``."""
    v = np.asarray(utilities, dtype=float)
    v = v - v.max(axis=-1, keepdims=True)
    e = np.exp(v)
    return e / e.sum(axis=-1, keepdims=True)


def _check_binary(y):
    y = np.asarray(y)
    if len(np.unique(y)) < 2:
        raise SingleClass("training labels contain a single class")
    return y.astype(float)


def _as_2d(X, d=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if d is not None and X.shape[1] != d:
        raise DimensionMismatch(f"expected {d} features, got {X.shape[1]}")
    return X


# ---------------------------------------------------------------------------
# linear family
# ---------------------------------------------------------------------------

@register("linear")
@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    link: str = "logit"          # logit | lda | svm
    penalty: str = "none"        # none | l1 | l2
    lam: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def utility(self, X) -> np.ndarray:
        X = _as_2d(X, self.n_features)
        return X @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.utility(X))

    def to_params(self):
        return {"weights": self.weights, "bias": float(self.bias), "link": self.link,
                "penalty": self.penalty, "lam": float(self.lam), "info": self.info}

    @classmethod
    def from_params(cls, p):
        return cls(np.asarray(p["weights"], dtype=float), p["bias"], p["link"], p["penalty"], p["lam"], p.get("info", {}))


def logistic_loss_grad(w, b, X, y, penalty="none", lam=0.0):
    """Mean cross-entropy plus the smooth part of the penalty, and its gradient.

    The L1 term is left out here; it is handled by the proximal step.
    """
    z = X @ w + b
    # log(1 + exp(z)) - y z, computed stably
    loss = np.mean(np.logaddexp(0.0, z) - y * z)
    r = (sigmoid(z) - y) / len(y)
    gw = X.T @ r
    gb = float(r.sum())
    if penalty == "l2":
        loss += 0.5 * lam * float(w @ w)
        gw = gw + lam * w
    return float(loss), gw, gb


def logistic_objective(w, b, X, y, penalty="none", lam=0.0):
    f = logistic_loss_grad(w, b, X, y, penalty, lam)[0]
    if penalty == "l1":
        f += lam * float(np.abs(w).sum())
    return f


def _soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _prox(v, step, penalty, lam):
    if penalty == "l1":
        return _soft_threshold(v, step * lam)
    if penalty == "l2":
        return v / (1.0 + step * lam)
    return v


def train_logistic(X, y, penalty: str = "none", lam: float = 0.0, max_iter: int = MAX_ITER,
                   tol: float = GRAD_TOL, w0=None) -> LinearModel:
    """Proximal gradient descent with backtracking on the penalized mean cross-entropy.

    Both penalties go through their proximal maps so a large ``lam`` does not
    force tiny steps on the unpenalized bias.
    """
    X = _as_2d(X)
    y = _check_binary(y)
    if penalty not in ("none", "l1", "l2"):
        raise ValueError(f"unknown penalty {penalty!r}")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    d = X.shape[1]
    w = np.zeros(d) if w0 is None else np.asarray(w0, dtype=float).copy()
    b = 0.0
    step = 1.0
    f, gw, gb = logistic_loss_grad(w, b, X, y)
    converged = False
    gnorm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        while True:
            w_new = _prox(w - step * gw, step, penalty, lam)
            b_new = b - step * gb
            dw, db = w_new - w, b_new - b
            f_new, gw_new, gb_new = logistic_loss_grad(w_new, b_new, X, y)
            quad = float(gw @ dw) + gb * db + (float(dw @ dw) + db * db) / (2.0 * step)
            if f_new <= f + quad + 1e-15 or step < 1e-12:
                break
            step *= 0.5
        gnorm = math.sqrt(float(dw @ dw) + db * db) / step
        w, b, f, gw, gb = w_new, b_new, f_new, gw_new, gb_new
        if gnorm <= tol:
            converged = True
            break
        step *= 2.0
    info = {"n_iter": it, "converged": converged, "grad_norm": float(gnorm)}
    return LinearModel(w, float(b), "logit", penalty, float(lam), info)


def train_lda(X, y, ridge: float = LDA_RIDGE) -> LinearModel:
    """Shared-covariance Gaussian classes reduced to a linear discriminant."""
    X = _as_2d(X)
    y = _check_binary(y)
    X0, X1 = X[y == 0], X[y == 1]
    if len(X0) < 2 or len(X1) < 2:
        raise DegenerateCovariance("each class needs at least two rows")
    mu0, mu1 = X0.mean(axis=0), X1.mean(axis=0)
    resid = np.vstack([X0 - mu0, X1 - mu1])
    cov = resid.T @ resid / (len(X) - 2)
    d = X.shape[1]
    cov_r = cov + ridge * np.eye(d)
    rank = np.linalg.matrix_rank(cov)
    if np.linalg.matrix_rank(cov_r) < d:
        raise DegenerateCovariance("pooled covariance is singular even after the ridge")
    w = np.linalg.solve(cov_r, mu1 - mu0)
    pi1 = len(X1) / len(X)
    b = -0.5 * float((mu0 + mu1) @ w) + math.log(pi1 / (1.0 - pi1))
    info = {"ridge_fallback": bool(rank < d), "prior_1": pi1}
    return LinearModel(w, b, "lda", "none", 0.0, info)


def svm_objective(w, b, X, ypm, C, penalty="l2", lam=1.0):
    hinge = np.maximum(0.0, 1.0 - ypm * (X @ w + b)).mean()
    if penalty == "l2":
        reg = 0.5 * lam * float(w @ w)
    elif penalty == "l1":
        reg = lam * float(np.abs(w).sum())
    else:
        reg = 0.0
    return reg + C * hinge


def train_linear_svm(X, y, C: float = 1.0, penalty: str = "l2", lam: float = 1.0,
                     max_iter: int = 2000) -> LinearModel:
    """Linear SVM: penalty plus ``C`` times mean hinge loss, by full-batch subgradient descent.

    Step sizes shrink as ``1/sqrt(t)``; the best iterate seen is returned.
    """
    X = _as_2d(X)
    y = _check_binary(y)
    ypm = 2.0 * y - 1.0
    d = X.shape[1]
    w = np.zeros(d)
    b = 0.0
    best = (svm_objective(w, b, X, ypm, C, penalty, lam), w.copy(), b)
    if C == 0:
        return LinearModel(w, 0.0, "svm", penalty, lam, {"C": 0.0, "n_iter": 0})
    scale = C * float(np.mean(np.sum(X * X, axis=1)) + 1.0) + (lam if penalty != "none" else 0.0)
    eta0 = 1.0 / scale
    for t in range(1, max_iter + 1):
        margin = ypm * (X @ w + b)
        active = (margin < 1.0).astype(float)
        coef = -C * active * ypm / len(ypm)
        gw = X.T @ coef
        gb = float(coef.sum())
        if penalty == "l2":
            gw = gw + lam * w
        elif penalty == "l1":
            gw = gw + lam * np.sign(w)
        eta = eta0 / math.sqrt(t)
        w = w - eta * gw
        b = b - eta * gb
        obj = svm_objective(w, b, X, ypm, C, penalty, lam)
        if obj < best[0]:
            best = (obj, w.copy(), b)
    obj, w, b = best
    return LinearModel(w, float(b), "svm", penalty, float(lam), {"C": float(C), "objective": float(obj), "n_iter": max_iter})


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

@register("ensemble")
@dataclass
class EnsembleModel:
    """Majority vote; the probability is the fraction of members voting on."""

    members: list
    kind: str = "bagged_logistic"

    def votes(self, X) -> np.ndarray:
        return np.stack([(m.predict_proba(X) > 0.5).astype(float) for m in self.members])

    def predict_proba(self, X) -> np.ndarray:
        return self.votes(X).mean(axis=0)

    def to_params(self):
        from .serialize import to_document
        return {"kind": self.kind, "members": [to_document(m) for m in self.members]}

    @classmethod
    def from_params(cls, p):
        from .serialize import encode, from_document
        members = [from_document(encode(doc))[0] for doc in p["members"]]
        return cls(members, p["kind"])


@register("constant")
@dataclass
class ConstantModel:
    probability: float

    def predict_proba(self, X) -> np.ndarray:
        return np.full(_as_2d(X).shape[0], float(self.probability))

    def to_params(self):
        return {"probability": float(self.probability)}

    @classmethod
    def from_params(cls, p):
        return cls(p["probability"])


def bootstrap_index(n, seed):
    return np.random.default_rng(seed).integers(0, n, n)


def train_bagged_logistic(X, y, n_members: int = 25, seed: int = 0, penalty: str = "l2",
                          lam: float = 1e-4, max_iter: int = 1000) -> EnsembleModel:
    """Logistic fits on bootstrap replicates combined by majority vote."""
    if n_members < 1:
        raise ValueError("n_members must be >= 1")
    X = _as_2d(X)
    y = np.asarray(y)
    _check_binary(y)
    members = []
    for m in range(n_members):
        idx = bootstrap_index(len(y), derive_seed(seed, f"bag/{m}"))
        yb = y[idx]
        if len(np.unique(yb)) < 2:
            members.append(ConstantModel(float(yb[0])))
            continue
        members.append(train_logistic(X[idx], yb, penalty, lam, max_iter=max_iter))
    return EnsembleModel(members, "bagged_logistic")


# ---------------------------------------------------------------------------
# k nearest neighbours
# ---------------------------------------------------------------------------

@register("knn")
@dataclass
class NeighborIndex:
    X: np.ndarray
    y: np.ndarray
    k: int = 5

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y).astype(float)
        self._tree = None

    def neighbors(self, Q, k):
        """Indices of the k nearest stored rows; distance ties go to the lower index."""
        Q = _as_2d(Q, self.X.shape[1])
        if k > len(self.X):
            raise KTooLarge(f"k={k} exceeds {len(self.X)} stored points")
        if len(self.X) * len(Q) <= 4_000_000:
            d2 = ((Q[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
            return np.argsort(d2, axis=1, kind="stable")[:, :k]
        from scipy.spatial import cKDTree
        if self._tree is None:
            self._tree = cKDTree(self.X)
        extra = min(len(self.X), k + 8)
        dist, idx = self._tree.query(Q, k=extra)
        dist = np.asarray(dist).reshape(len(Q), extra)
        idx = np.asarray(idx).reshape(len(Q), extra)
        order = np.lexsort((idx, np.round(dist, 12)), axis=1)
        return np.take_along_axis(idx, order, axis=1)[:, :k]

    def predict_proba(self, X, k=None) -> np.ndarray:
        return knn_predict(self, X, k or self.k)

    def to_params(self):
        return {"X": self.X, "y": self.y, "k": int(self.k)}

    @classmethod
    def from_params(cls, p):
        return cls(p["X"], p["y"], p["k"])


def knn_predict(idx: NeighborIndex, X, k: int) -> np.ndarray:
    """Fraction of the k nearest stored labels equal to 1."""
    nb = idx.neighbors(X, k)
    return idx.y[nb].mean(axis=1)


# ---------------------------------------------------------------------------
# CART and random forest
# ---------------------------------------------------------------------------

@register("tree")
@dataclass
class DecisionTree:
    feature: np.ndarray      # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray        # fraction of class 1 at the node
    n_samples: np.ndarray
    max_depth: int = 12
    min_leaf: int = 5

    @property
    def n_splits(self) -> int:
        return int((self.feature >= 0).sum())

    def apply(self, X) -> np.ndarray:
        X = _as_2d(X)
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            rows = np.flatnonzero(inner)
            go_left = X[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def predict_proba(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_params(self):
        return {k: getattr(self, k) for k in ("feature", "threshold", "left", "right", "value", "n_samples",
                                              "max_depth", "min_leaf")}

    @classmethod
    def from_params(cls, p):
        return cls(**p)


def _best_split(X, y, rows, features, min_leaf):
    n = len(rows)
    yr = y[rows]
    total1 = yr.sum()
    best = (math.inf, -1, 0.0)
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    for f in features:
        xs = X[rows, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        c1 = np.cumsum(yr[order])[:-1]
        ok = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not ok.any():
            continue
        pl = c1 / nl
        pr = (total1 - c1) / nr
        imp = nl * 2 * pl * (1 - pl) + nr * 2 * pr * (1 - pr)
        imp = np.where(ok, imp, math.inf)
        pos = int(np.argmin(imp))
        if imp[pos] < best[0] - 1e-12:
            thr = 0.5 * (xs[pos] + xs[pos + 1])
            if not thr < xs[pos + 1]:
                thr = xs[pos]
            best = (float(imp[pos]), int(f), float(thr))
    return best


def build_tree(X, y, max_depth: int = 12, min_leaf: int = 5, max_features: int | None = None,
               rng: np.random.Generator | None = None) -> DecisionTree:
    """Greedy CART with Gini impurity; ``max_features`` columns are drawn afresh at every split."""
    X = _as_2d(X)
    y = np.asarray(y, dtype=float)
    d = X.shape[1]
    m = d if max_features is None else max(1, min(d, max_features))
    rng = rng or np.random.default_rng(0)
    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        count.append(len(rows))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        p = value[node]
        if depth >= max_depth or p in (0.0, 1.0) or len(rows) < 2 * min_leaf:
            continue
        feats = np.arange(d) if m == d else np.sort(rng.choice(d, m, replace=False))
        imp, f, thr = _best_split(X, y, rows, feats, min_leaf)
        if f < 0:
            continue
        go_left = X[rows, f] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))
    return DecisionTree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                        np.array(right, dtype=np.int64), np.array(value), np.array(count, dtype=np.int64),
                        max_depth, min_leaf)


def train_random_forest(X, y, n_trees: int = 100, max_depth: int = 12, feat_subset_size: int | None = None,
                        seed: int = 0, min_leaf: int = 5, bootstrap: bool = True) -> EnsembleModel:
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X = _as_2d(X)
    y = np.asarray(y, dtype=float)
    m = feat_subset_size or int(math.ceil(math.sqrt(X.shape[1])))
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(derive_seed(seed, f"tree/{t}"))
        rows = rng.integers(0, len(y), len(y)) if bootstrap else np.arange(len(y))
        trees.append(build_tree(X[rows], y[rows], max_depth, min_leaf, m, rng))
    return EnsembleModel(trees, "random_forest")
