"""Cross-validation, randomized hyperparameter search and the scenario experiment.

The experiment walks every (occupant, resource) cell: pool features, apply
the scenario mask, pick features by mRMR on the training period, scale,
oversample the training rows, tune and fit each model in the roster, and
score AUC on the test period.
"""
from __future__ import annotations

import csv
import datetime as dt
import html
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import bench_models as bm
from .data import (
    RESOURCES,
    CalendarRange,
    Dataset,
    FeatureMatrix,
    ResourceKind,
    Scenario,
    make_windows,
    pool_features,
    scenario_filter,
)
from .deep.lstm import BiRNNConfig, birnn_predict, birnn_train
from .deep.mlp import MLPConfig, mlp_train
from .errors import KTooLarge, SeqChoiceError, SingleClass
from .metrics import auc_or_none, roc_auc, roc_curve  # noqa: F401  (re-exported)
from .prep import TOP_FEATURES, BalanceConfig, balance_dataset, discretize, mrmr_select, standardize
from .rng import derive_seed

NA = "N/A"


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CVPlan:
    k: int
    folds: tuple     # tuple of index arrays
    seed: int

    @property
    def n(self) -> int:
        return sum(len(f) for f in self.folds)

    def split(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """``(train_idx, val_idx)`` for fold ``i``."""
        val = self.folds[i]
        train = np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))
        return train, val

    def __iter__(self):
        return (self.split(i) for i in range(self.k))


def kfold_split(n: int, k: int = 10, seed: int = 0) -> CVPlan:
    """Seeded shuffle, then contiguous chunks whose sizes differ by at most one."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise KTooLarge(f"{k} folds for {n} rows")
    order = np.random.default_rng(seed).permutation(n)
    return CVPlan(k, tuple(np.sort(c) for c in np.array_split(order, k)), seed)


# ---------------------------------------------------------------------------
# randomized grid search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogUniform:
    low: float
    high: float


@dataclass(frozen=True)
class GridSearchSpec:
    """Domains are lists (uniform choice), ``(low, high)`` tuples (uniform real) or LogUniform."""

    domains: dict
    budget: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")


def _draw(rng, domain):
    if isinstance(domain, LogUniform):
        return float(math.exp(rng.uniform(math.log(domain.low), math.log(domain.high))))
    if isinstance(domain, tuple):
        lo, hi = domain
        return float(rng.uniform(lo, hi))
    values = list(domain)
    return values[int(rng.integers(0, len(values)))]


def sample_configurations(spec: GridSearchSpec) -> list[dict]:
    rng = np.random.default_rng(spec.seed)
    names = sorted(spec.domains)
    return [{name: _draw(rng, spec.domains[name]) for name in names} for _ in range(spec.budget)]


@dataclass
class GridSearchResult:
    best_params: dict
    best_score: float
    trials: list    # (params, mean CV AUC)


def random_grid_search(spec: GridSearchSpec, train_fn: Callable, eval_fn: Callable, cv: CVPlan) -> GridSearchResult:
    """Score ``budget`` sampled configurations by mean fold AUC; the first best sample wins ties.

    ``train_fn(params, train_idx)`` returns a model and ``eval_fn(model, val_idx)``
    its AUC (or None when the fold lacks a class; such folds are skipped).
    """
    trials = []
    best, best_score = None, float("nan")
    for params in sample_configurations(spec):
        scores = []
        for train_idx, val_idx in cv:
            auc = eval_fn(train_fn(params, train_idx), val_idx)
            if auc is not None:
                scores.append(auc)
        score = float(np.mean(scores)) if scores else float("nan")
        trials.append((params, score))
        if best is None or (not math.isnan(score) and (math.isnan(best_score) or score > best_score)):
            best, best_score = params, score
    return GridSearchResult(best, best_score, trials)


# ---------------------------------------------------------------------------
# model roster
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    name: str
    kind: str                  # "tabular" or "sequence"
    domains: dict
    fit: Callable | None       # (X, y, params, seed, settings) -> model with predict_proba
    smote: bool = True


def _fit_logistic_l2(X, y, p, seed, s):
    return bm.train_logistic(X, y, "l2", p["lam"], max_iter=s.max_iter)


def _fit_logistic_l1(X, y, p, seed, s):
    return bm.train_logistic(X, y, "l1", p["lam"], max_iter=s.max_iter)


def _fit_bagged(X, y, p, seed, s):
    return bm.train_bagged_logistic(X, y, p["n_members"], seed, "l2", p["lam"], max_iter=min(s.max_iter, 300))


def _fit_lda(X, y, p, seed, s):
    return bm.train_lda(X, y)


def _fit_knn(X, y, p, seed, s):
    return bm.NeighborIndex(X, y, min(int(p["k"]), len(y)))


def _fit_svm(X, y, p, seed, s):
    model = bm.train_linear_svm(X, y, C=p["C"], lam=1.0)
    return model


def _fit_forest(X, y, p, seed, s):
    return bm.train_random_forest(X, y, int(p["n_trees"]), int(p["max_depth"]), seed=seed)


def _fit_mlp(X, y, p, seed, s):
    cfg = replace(s.mlp, learning_rate=p["learning_rate"], seed=seed % (2 ** 32))
    return mlp_train(X, y, cfg)[0]


ROSTER = {
    "logistic": ModelSpec("logistic", "tabular", {"lam": [1e-4, 1e-3, 1e-2]}, _fit_logistic_l2),
    "lasso": ModelSpec("lasso", "tabular", {"lam": [1e-4, 1e-3, 1e-2]}, _fit_logistic_l1),
    "bagged_logistic": ModelSpec("bagged_logistic", "tabular", {"n_members": [5, 11], "lam": [1e-4, 1e-2]},
                                 _fit_bagged),
    "lda": ModelSpec("lda", "tabular", {}, _fit_lda),
    "knn": ModelSpec("knn", "tabular", {"k": [5, 15, 31]}, _fit_knn),
    "svm": ModelSpec("svm", "tabular", {"C": [0.1, 1.0, 10.0]}, _fit_svm),
    "random_forest": ModelSpec("random_forest", "tabular", {"n_trees": [25, 50], "max_depth": [6, 12]}, _fit_forest),
    "mlp": ModelSpec("mlp", "tabular", {"learning_rate": [0.003, 0.01, 0.03]}, _fit_mlp),
    "birnn": ModelSpec("birnn", "sequence", {}, None, smote=False),
}
BENCHMARK_MODELS = ("logistic", "lasso", "bagged_logistic", "lda", "knn", "svm", "random_forest")


def resolve_roster(names: Sequence[str]) -> list[ModelSpec]:
    out = []
    for n in names:
        if n not in ROSTER:
            raise ValueError(f"unknown model {n!r}; choose from {', '.join(ROSTER)}")
        out.append(ROSTER[n])
    return out


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Split:
    train_start: dt.date
    train_end: dt.date
    test_start: dt.date
    test_end: dt.date

    def __post_init__(self):
        if self.train_start > self.train_end or self.test_start > self.test_end:
            raise ValueError("split ranges must start before they end")
        if not (self.train_end < self.test_start or self.test_end < self.train_start):
            raise ValueError("training and test ranges overlap")


@dataclass(frozen=True)
class ExperimentSettings:
    top_features: int = TOP_FEATURES
    n_bins: int = 10
    smote_k: int = 5
    smote_ratio: float = 1.0
    cv_folds: int = 3
    grid_budget: int = 2
    max_train_rows: int | None = 20_000
    max_iter: int = 2000
    mlp: MLPConfig = MLPConfig(epochs=10)
    birnn: BiRNNConfig = BiRNNConfig()
    validation_fraction: float = 0.2
    calendar: tuple = ()
    seed: int = 0


@dataclass(frozen=True)
class ReportCell:
    occupant: str
    resource: str
    scenario: str
    model: str
    auc: float | None
    status: str        # "ok" or "N/A: <reason>"


@dataclass
class ReportTable:
    columns: list      # (resource, occupant, scenario)
    models: list
    cells: list = field(default_factory=list)

    def cell(self, model, resource, occupant, scenario) -> ReportCell | None:
        for c in self.cells:
            if (c.model, c.resource, c.occupant, c.scenario) == (model, resource, occupant, scenario):
                return c
        return None

    def _grid(self):
        header = ["model"] + [f"{r}/{o}/{s}" for r, o, s in self.columns]
        rows = []
        for m in self.models:
            row = [m]
            for r, o, s in self.columns:
                c = self.cell(m, r, o, s)
                row.append(NA if c is None or c.auc is None else f"{c.auc:.3f}")
            rows.append(row)
        return header, rows

    def render_text(self) -> str:
        header, rows = self._grid()
        widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)] if header else []
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in rows]
        return "\n".join(line.rstrip() for line in lines) + "\n"

    def render_html(self) -> str:
        header, rows = self._grid()
        out = ["<table>", "  <thead><tr>" + "".join(f"<th>{html.escape(h)}</th>" for h in header) + "</tr></thead>",
               "  <tbody>"]
        for row in rows:
            out.append("    <tr>" + "".join(f"<td>{html.escape(v)}</td>" for v in row) + "</tr>")
        out += ["  </tbody>", "</table>"]
        return "\n".join(out) + "\n"

    def write_csv(self, target) -> None:
        if isinstance(target, (str, Path)):
            with open(target, "w", newline="", encoding="utf-8") as fh:
                return self.write_csv(fh)
        w = csv.writer(target, lineterminator="\n")
        w.writerow(["occupant", "resource", "scenario", "model", "auc", "status"])
        for c in self.cells:
            w.writerow([c.occupant, c.resource, c.scenario, c.model, "" if c.auc is None else repr(c.auc), c.status])

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _subsample(n, limit, seed):
    if limit is None or n <= limit:
        return np.arange(n)
    return np.sort(np.random.default_rng(seed).choice(n, limit, replace=False))


def fit_tabular(spec: ModelSpec, Xtr, ytr, settings: ExperimentSettings, seed: int):
    """Tune by random search over CV folds (SMOTE inside each fold), then refit on all training rows."""
    def prepare(X, y, s):
        if not spec.smote:
            return X, y
        try:
            return balance_dataset(X, y, BalanceConfig(settings.smote_k, settings.smote_ratio, s))
        except SeqChoiceError:
            return X, y  # too few minority rows to interpolate

    params = {}
    if spec.domains:
        n_folds = min(settings.cv_folds, len(ytr))
        cv = kfold_split(len(ytr), n_folds, derive_seed(seed, "cv") % (2 ** 32))

        def train_fn(p, idx):
            Xf, yf = prepare(Xtr[idx], ytr[idx], derive_seed(seed, "smote/fold"))
            if len(np.unique(yf)) < 2:
                return bm.ConstantModel(float(yf[0]))
            return spec.fit(Xf, yf, p, seed, settings)

        def eval_fn(model, idx):
            return auc_or_none(model.predict_proba(Xtr[idx]), ytr[idx])

        grid = GridSearchSpec(spec.domains, settings.grid_budget, derive_seed(seed, "grid") % (2 ** 32))
        params = random_grid_search(grid, train_fn, eval_fn, cv).best_params
    Xb, yb = prepare(Xtr, ytr, derive_seed(seed, "smote"))
    return spec.fit(Xb, yb, params, seed, settings)


def select_and_scale(train: FeatureMatrix, y, settings: ExperimentSettings):
    """mRMR on the training rows, then standardization fitted on the same rows."""
    k = min(settings.top_features, train.X.shape[1])
    sel = mrmr_select(discretize(train.X, settings.n_bins, train.names), y, k)
    train_std, stats = standardize(train.select(sel.features))
    return sel.features, stats, train_std


def _sequence_cell(fm_train: FeatureMatrix, fm_test: FeatureMatrix, resource, settings, seed) -> float:
    cfg = replace(settings.birnn, seed=seed % (2 ** 32))
    days = np.unique(fm_train.timestamps.astype("datetime64[D]"))
    n_val = max(1, int(round(len(days) * settings.validation_fraction)))
    cut = days[-n_val]
    tr_mask = fm_train.timestamps.astype("datetime64[D]") < cut
    wt = make_windows(fm_train.take(tr_mask), resource, cfg.window)
    wv = make_windows(fm_train.take(~tr_mask), resource, cfg.window)
    we = make_windows(fm_test, resource, cfg.window)
    model, _ = birnn_train(wt, wv, cfg)
    return roc_auc(birnn_predict(model, we.batch(np.arange(len(we)))), we.labels)


def _run_cell(task):
    occ, resource, scenario, fm, split, roster, settings, root = task
    cells = []

    def na(model, reason):
        cells.append(ReportCell(occ, resource.value, scenario.value, model, None, f"{NA}: {reason}"))

    if resource not in fm.labels:
        for spec in roster:
            na(spec.name, "resource not installed")
        return cells
    train = fm.between(split.train_start, split.train_end)
    test = fm.between(split.test_start, split.test_end)
    ytr_all, yte = train.labels[resource], test.labels[resource]
    if len(yte) == 0 or len(np.unique(yte)) < 2:
        for spec in roster:
            na(spec.name, "single class in test period")
        return cells
    if len(np.unique(ytr_all)) < 2:
        for spec in roster:
            na(spec.name, "single class in training period")
        return cells

    cell_seed = derive_seed(root, f"cell/{occ}/{resource.value}/{scenario.value}")
    names, stats, train_std = select_and_scale(train, ytr_all, settings)
    test_std, _ = standardize(test.select(names), stats)

    for spec in roster:
        seed = derive_seed(cell_seed, f"model/{spec.name}")
        try:
            if spec.kind == "sequence":
                auc = _sequence_cell(train_std, test_std, resource, settings, seed)
            else:
                rows = _subsample(train_std.n_rows, settings.max_train_rows, derive_seed(seed, "subsample"))
                Xtr, ytr = train_std.X[rows], ytr_all[rows]
                if len(np.unique(ytr)) < 2:
                    raise SingleClass("subsample holds a single class")
                model = fit_tabular(spec, Xtr, ytr, settings, seed)
                auc = roc_auc(model.predict_proba(test_std.X), yte)
            cells.append(ReportCell(occ, resource.value, scenario.value, spec.name, float(auc), "ok"))
        except SeqChoiceError as exc:
            na(spec.name, f"{exc.code}: {exc}")
    return cells


def occupant_features(ds: Dataset, occ: str, calendar) -> FeatureMatrix:
    part = ds.for_occupant(occ)
    order = np.argsort(part.timestamps, kind="stable")
    return pool_features(part.take(order), calendar)


def run_scenario_experiment(ds: Dataset, split: Split, scenario: Scenario, resources: Sequence[ResourceKind],
                            roster: Sequence[ModelSpec | str], settings: ExperimentSettings = ExperimentSettings(),
                            jobs: int = 1) -> ReportTable:
    """Fill a model x (resource, occupant, scenario) AUC table.

    Cells run independently with seeds derived from the cell identity, so the
    table does not depend on ``jobs``.
    """
    roster = [ROSTER[m] if isinstance(m, str) else m for m in roster]
    calendar: Sequence[CalendarRange] = settings.calendar
    occupants = sorted(ds.occupant_ids)
    resources = [r for r in RESOURCES if r in set(resources)]
    table = ReportTable([(r.value, o, scenario.value) for r in resources for o in occupants],
                        [m.name for m in roster])
    if not roster:
        return table
    tasks = []
    for occ in occupants:
        fm = scenario_filter(occupant_features(ds, occ, calendar), scenario)
        for r in resources:
            tasks.append((occ, r, scenario, fm, split, roster, settings, settings.seed))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    cells = [c for group in results for c in group]
    order = {(r, o, s): i for i, (r, o, s) in enumerate(table.columns)}
    model_pos = {m: i for i, m in enumerate(table.models)}
    cells.sort(key=lambda c: (order[(c.resource, c.occupant, c.scenario)], model_pos[c.model]))
    table.cells = cells
    return table
