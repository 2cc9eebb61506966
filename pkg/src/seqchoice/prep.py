"""Preprocessing: standardization, mutual information, mRMR selection, SMOTE."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import KTooLarge, LengthMismatch, TooFewMinority, TooFewRows
from .rng import as_rng

SD_FLOOR = 1e-12
DEFAULT_BINS = 10
TIE_TOL = 1e-12
TOP_FEATURES = 25


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    sd: np.ndarray    # population sd; 0 marks a pass-through column

    @property
    def passthrough(self) -> np.ndarray:
        return self.sd < SD_FLOOR

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != len(self.mean):
            raise ValueError(f"expected {len(self.mean)} columns, got {X.shape[-1]}")
        pt = self.passthrough
        scale = np.where(pt, 1.0, self.sd)
        shift = np.where(pt, 0.0, self.mean)
        return (X - shift) / scale


def standardize(X, stats: StandardizationStats | None = None):
    """Center and scale columns; zero-variance columns pass through untouched.

    Accepts an array or a FeatureMatrix and returns the same kind together
    with the statistics used.
    """
    fm = None
    if hasattr(X, "descriptors"):
        fm, X = X, X.X
    X = np.asarray(X, dtype=float)
    if stats is None:
        if X.shape[0] < 2:
            raise TooFewRows("standardization needs at least two rows")
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        sd = np.where(sd < SD_FLOOR, 0.0, sd)
        stats = StandardizationStats(mean, sd)
    out = stats.apply(X)
    return (fm.with_X(out) if fm is not None else out), stats


# ---------------------------------------------------------------------------
# discretization and mutual information
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscretizedMatrix:
    codes: np.ndarray        # (n, d) int
    bins: np.ndarray         # (d,) bin count per column
    edges: tuple             # per column: strictly increasing inner cut points
    names: tuple = ()

    @property
    def n_features(self) -> int:
        return self.codes.shape[1]


def discretize(X, n_bins: int = DEFAULT_BINS, names: Sequence[str] = ()) -> DiscretizedMatrix:
    """Equal-frequency binning; columns with at most ``n_bins`` distinct values keep one bin per value."""
    if hasattr(X, "descriptors"):
        names = tuple(X.names)
        X = X.X
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    codes = np.zeros((n, d), dtype=np.int64)
    bins = np.zeros(d, dtype=np.int64)
    edges = []
    for j in range(d):
        col = X[:, j]
        uniq = np.unique(col)
        if len(uniq) <= n_bins:
            cuts = (uniq[1:] + uniq[:-1]) / 2.0
        else:
            q = np.quantile(col, np.linspace(0, 1, n_bins + 1)[1:-1])
            cuts = np.unique(q)
        codes[:, j] = np.searchsorted(cuts, col, side="right")
        bins[j] = len(cuts) + 1
        edges.append(cuts)
    return DiscretizedMatrix(codes, bins, tuple(edges), tuple(names))


def mutual_information(x, y) -> float:
    """Plug-in mutual information (nats) between two discrete vectors."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise LengthMismatch(f"lengths differ: {x.shape} vs {y.shape}")
    n = len(x)
    if n == 0:
        return 0.0
    xi = np.unique(x, return_inverse=True)[1].ravel()
    yi = np.unique(y, return_inverse=True)[1].ravel()
    return _mi_codes(xi, yi, int(xi.max()) + 1, int(yi.max()) + 1)


def _mi_codes(xi, yi, nx, ny) -> float:
    """MI of two non-negative integer code vectors with known alphabet sizes."""
    n = len(xi)
    joint = np.bincount(xi * ny + yi, minlength=nx * ny).reshape(nx, ny).astype(float)
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    mi = np.sum(joint[nz] * np.log(joint[nz] * n / (px @ py)[nz])) / n
    return max(float(mi), 0.0)


def entropy(x) -> float:
    counts = np.unique(np.asarray(x), return_counts=True)[1].astype(float)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


# ---------------------------------------------------------------------------
# mRMR
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectionResult:
    features: tuple    # selected names (or column indices as strings when unnamed)
    indices: tuple
    scores: tuple


def _first_max(values: np.ndarray, candidates: np.ndarray) -> int:
    best = values[candidates].max()
    return int(candidates[np.flatnonzero(values[candidates] >= best - TIE_TOL)[0]])


def mrmr_select(dm: DiscretizedMatrix, y, k: int) -> SelectionResult:
    """Greedy mRMR in difference form: relevance minus mean redundancy with the picked set."""
    d = dm.n_features
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > d:
        raise KTooLarge(f"asked for {k} of {d} features")
    y_codes = np.unique(np.asarray(y), return_inverse=True)[1].ravel()
    ny = int(y_codes.max()) + 1 if len(y_codes) else 1
    codes = dm.codes
    bins = dm.bins
    relevance = np.array([_mi_codes(codes[:, j], y_codes, int(bins[j]), ny) for j in range(d)])
    redundancy_sum = np.zeros(d)
    chosen: list[int] = []
    scores: list[float] = []
    remaining = np.arange(d)
    for step in range(k):
        if step == 0:
            crit = relevance.copy()
        else:
            crit = relevance - redundancy_sum / len(chosen)
        pick = _first_max(crit, remaining)
        chosen.append(pick)
        scores.append(float(crit[pick]))
        remaining = remaining[remaining != pick]
        for j in remaining:
            redundancy_sum[j] += _mi_codes(codes[:, j], codes[:, pick], int(bins[j]), int(bins[pick]))
    names = dm.names or tuple(str(j) for j in range(d))
    return SelectionResult(tuple(names[j] for j in chosen), tuple(chosen), tuple(scores))


def write_selection(sel: SelectionResult, target) -> None:
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="", encoding="utf-8") as fh:
            return write_selection(sel, fh)
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(["rank", "feature", "score"])
    for i, (name, score) in enumerate(zip(sel.features, sel.scores)):
        writer.writerow([i + 1, name, repr(score)])


# ---------------------------------------------------------------------------
# SMOTE
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BalanceConfig:
    k_neighbors: int = 5
    target_ratio: float = 1.0
    seed: int = 0
    # optional hook choosing which minority rows may seed synthetic points
    # (e.g. an SVM-based grouping step); receives (minority rows, majority rows)
    base_selector: Callable | None = None

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if not 0.0 < self.target_ratio <= 1.0:
            raise ValueError("target_ratio must lie in (0, 1]")


def nearest_minority_neighbors(minority: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other minority rows (Euclidean), shape ``(m, k)``."""
    tree = cKDTree(minority)
    _, idx = tree.query(minority, k=k + 1)
    idx = np.asarray(idx).reshape(len(minority), k + 1)
    out = np.empty((len(minority), k), dtype=np.int64)
    for i, row in enumerate(idx):
        row = row[row != i]
        out[i] = row[:k]
    return out


def smote(minority, k_neighbors: int, n_synthetic: int, seed=0, base_rows=None) -> np.ndarray:
    """Synthetic rows ``p + s * (q - p)`` with ``q`` among the k nearest minority neighbors of ``p``."""
    minority = np.asarray(minority, dtype=float)
    m = len(minority)
    if m <= k_neighbors:
        raise TooFewMinority(f"{m} minority rows, need more than k={k_neighbors}")
    if n_synthetic <= 0:
        return np.zeros((0, minority.shape[1]))
    rng = as_rng(seed)
    neigh = nearest_minority_neighbors(minority, k_neighbors)
    pool = np.arange(m) if base_rows is None else np.asarray(base_rows)
    base = pool[rng.integers(0, len(pool), n_synthetic)]
    pick = neigh[base, rng.integers(0, k_neighbors, n_synthetic)]
    s = rng.random(n_synthetic)[:, None]
    p = minority[base]
    return p + s * (minority[pick] - p)


def synthetic_count(n_minority: int, n_majority: int, target_ratio: float) -> int:
    return max(0, int(np.ceil(target_ratio * n_majority - 1e-9)) - n_minority)


def balance_dataset(X, y, cfg: BalanceConfig = BalanceConfig()):
    """Append SMOTE rows of the minority class until ``minority/majority >= target_ratio``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    n1 = int((y == 1).sum())
    n0 = len(y) - n1
    minority_label = 1 if n1 < n0 else 0
    n_min, n_maj = min(n0, n1), max(n0, n1)
    n_new = synthetic_count(n_min, n_maj, cfg.target_ratio)
    if n_new == 0:
        return X, y
    minority = X[y == minority_label]
    base_rows = None
    if cfg.base_selector is not None:
        base_rows = cfg.base_selector(minority, X[y != minority_label])
    synth = smote(minority, cfg.k_neighbors, n_new, cfg.seed, base_rows)
    X_out = np.vstack([X, synth])
    y_out = np.concatenate([y, np.full(n_new, minority_label, dtype=y.dtype)])
    return X_out, y_out
