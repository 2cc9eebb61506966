"""Command line front end.

Every subcommand reads the same TOML experiment file (see ``README.md`` for
the grammar), resolves one root seed and writes its results under
``out_dir``.  Outputs depend only on the config, the seed and the input
files, never on ``--jobs``.

Exit status: 0 on success, 1 on usage or config errors, 2 on data errors.
Errors go to standard error as ``ERROR <code>: <message>``.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    RESOURCES, WEATHER_COLUMNS, Dataset, MarkovOrder2, Memoryless, ResourceKind, Scenario, SynthConfig,
    WeatherOnly, pool_features, read_calendar, read_dataset, scenario_filter, synth_generate,
    write_dataset, write_feature_matrix,
)
from .deep.lstm import BiRNNConfig
from .deep.mlp import MLPConfig
from .errors import ConfigError, SeqChoiceError, SingleClass, UsageError
from .evaluation import (
    ROSTER, ExperimentSettings, Split, _subsample, fit_tabular, occupant_features, resolve_roster,
    run_scenario_experiment, select_and_scale,
)
from .game_sim import ProfileSettings, fit_agent_profiles, simulate_game, write_trace
from .generative import (
    MIN_PERMUTATIONS, RVAEConfig, VAEConfig, permutation_test_dtw, rvae_generate, rvae_train, trace_channels,
    traces_to_dataset, vae_generate, vae_train,
)
from .points import PointsLedger, compute_baselines, update_rankings, write_ledger
from .prep import BalanceConfig, balance_dataset, discretize, mrmr_select, write_selection
from .rng import derive_seed
from .serialize import encode, to_document
from .stats import cronbach_alpha, read_survey, savings_table, write_savings_csv

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger("seqchoice")

SEED_ENV = "SEQCHOICE_SEED"
SEED_MOD = 2 ** 32


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _date(v):
    if isinstance(v, dt.date) and not isinstance(v, dt.datetime):
        return v
    if isinstance(v, str):
        return dt.date.fromisoformat(v)
    raise ValueError("expected an ISO date")


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError("expected an integer")
    return v


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError("expected a number")
    return float(v)


def _str(v):
    if not isinstance(v, str):
        raise ValueError("expected a string")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise ValueError("expected true or false")
    return v


def _int_list(v):
    if not isinstance(v, list) or not v or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
        raise ValueError("expected a non-empty list of integers")
    return tuple(v)


def _str_list(v):
    if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
        raise ValueError("expected a list of strings")
    return tuple(v)


@dataclass(frozen=True)
class DataSection:
    path: str | None = None
    calendar: str | None = None


@dataclass(frozen=True)
class SynthSection:
    occupants: int = 2
    days: int = 7
    signal: str = "memoryless"          # memoryless | markov2 | weather
    feature: str = "ext_humidity_pct"
    threshold: float | None = None
    persistence: float = 0.95
    noise_flip_prob: float = 0.0
    start: dt.date = dt.date(2018, 2, 19)
    target: str = "ceiling_fan"
    air_con: bool = True


@dataclass(frozen=True)
class SplitSection:
    train_start: dt.date | None = None
    train_end: dt.date | None = None
    test_start: dt.date | None = None
    test_end: dt.date | None = None


@dataclass(frozen=True)
class ExperimentSection:
    scenario: str = "step-ahead"
    resources: tuple = ()
    models: tuple = ("logistic",)
    top_features: int = 25
    n_bins: int = 10
    cv_folds: int = 3
    grid_budget: int = 2
    max_train_rows: int = 20_000
    max_iter: int = 2000
    smote_k: int = 5
    smote_ratio: float = 1.0


@dataclass(frozen=True)
class MLPSection:
    hidden_sizes: tuple = (64, 32)
    epochs: int = 10
    batch_size: int = 256
    dropout: float = 0.5
    batch_norm: bool = True


@dataclass(frozen=True)
class BiRNNSection:
    n_layers: int = 3
    hidden_size: int = 64
    dropout: float = 0.6
    window: int = 120
    batch_size: int = 240
    lr0: float = 0.01
    decay: float = 0.9
    momentum: float = 0.9
    max_epochs: int = 35
    patience: int = 5
    input_transform: str = "sigmoid"


@dataclass(frozen=True)
class GenerateSection:
    model: str = "vae"                  # vae | rvae
    z_dim: int = 4
    epochs: int = 50
    window: int = 60
    length: int = 2880
    occupant: str | None = None
    n_perm: int = 99
    segment_len: int = 1440


@dataclass(frozen=True)
class SimulateSection:
    model: str = "logistic"
    horizon: int | None = None
    mode: str = "argmax"                # argmax | sample


@dataclass(frozen=True)
class StatsSection:
    before: str | None = None
    after: str | None = None
    survey: str | None = None
    variant: str = "pooled"


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "out"
    data: DataSection = DataSection()
    synth: SynthSection = SynthSection()
    split: SplitSection = SplitSection()
    experiment: ExperimentSection = ExperimentSection()
    domains: dict = field(default_factory=dict)
    mlp: MLPSection = MLPSection()
    birnn: BiRNNSection = BiRNNSection()
    generate: GenerateSection = GenerateSection()
    simulate: SimulateSection = SimulateSection()
    stats: StatsSection = StatsSection()


_CONVERTERS = {
    DataSection: {"path": _str, "calendar": _str},
    SynthSection: {"occupants": _int, "days": _int, "signal": _str, "feature": _str, "threshold": _float,
                   "persistence": _float, "noise_flip_prob": _float, "start": _date, "target": _str,
                   "air_con": _bool},
    SplitSection: {"train_start": _date, "train_end": _date, "test_start": _date, "test_end": _date},
    ExperimentSection: {"scenario": _str, "resources": _str_list, "models": _str_list, "top_features": _int,
                        "n_bins": _int, "cv_folds": _int, "grid_budget": _int, "max_train_rows": _int,
                        "max_iter": _int, "smote_k": _int, "smote_ratio": _float},
    MLPSection: {"hidden_sizes": _int_list,
                 "epochs": _int, "batch_size": _int, "dropout": _float, "batch_norm": _bool},
    BiRNNSection: {"n_layers": _int, "hidden_size": _int, "dropout": _float, "window": _int,
                   "batch_size": _int, "lr0": _float, "decay": _float, "momentum": _float,
                   "max_epochs": _int, "patience": _int, "input_transform": _str},
    GenerateSection: {"model": _str, "z_dim": _int, "epochs": _int, "window": _int, "length": _int,
                      "occupant": _str, "n_perm": _int, "segment_len": _int},
    SimulateSection: {"model": _str, "horizon": _int, "mode": _str},
    StatsSection: {"before": _str, "after": _str, "survey": _str, "variant": _str},
}


def _section(cls, name, raw):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    conv = _CONVERTERS[cls]
    values = {}
    for key, v in raw.items():
        if key not in conv:
            raise ConfigError(f"unknown key {name}.{key}")
        try:
            values[key] = conv[key](v)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{name}.{key}: {exc}") from None
    return cls(**values)


def _domains(raw) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("[domains] must be a table of tables")
    out = {}
    for model, table in raw.items():
        if model not in ROSTER:
            raise ConfigError(f"unknown model in domains: {model!r}")
        allowed = ROSTER[model].domains
        if not isinstance(table, dict):
            raise ConfigError(f"[domains.{model}] must be a table")
        dom = {}
        for key, values in table.items():
            if key not in allowed:
                raise ConfigError(f"unknown key domains.{model}.{key}")
            if not isinstance(values, list) or not values:
                raise ConfigError(f"domains.{model}.{key} must be a non-empty list")
            dom[key] = list(values)
        out[model] = dom
    return out


def parse_config(doc: dict) -> ExperimentConfig:
    """Build and validate an ``ExperimentConfig`` from a parsed TOML document."""
    sections = {f.name: f.type for f in fields(ExperimentConfig)}
    classes = {"data": DataSection, "synth": SynthSection, "split": SplitSection,
               "experiment": ExperimentSection, "mlp": MLPSection, "birnn": BiRNNSection,
               "generate": GenerateSection, "simulate": SimulateSection, "stats": StatsSection}
    kwargs = {}
    for key, value in doc.items():
        if key not in sections:
            raise ConfigError(f"unknown key {key}")
        try:
            if key == "seed":
                kwargs[key] = _int(value)
            elif key == "out_dir":
                kwargs[key] = _str(value)
            elif key == "domains":
                kwargs[key] = _domains(value)
            else:
                kwargs[key] = _section(classes[key], key, value)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    cfg = ExperimentConfig(**kwargs)
    _check(cfg)
    return cfg


def _check(cfg: ExperimentConfig) -> None:
    if cfg.synth.signal not in ("memoryless", "markov2", "weather"):
        raise ConfigError(f"synth.signal must be memoryless, markov2 or weather, got {cfg.synth.signal!r}")
    if cfg.synth.feature not in WEATHER_COLUMNS:
        raise ConfigError(f"synth.feature must be one of {', '.join(WEATHER_COLUMNS)}")
    _resource(cfg.synth.target)
    for r in cfg.experiment.resources:
        _resource(r)
    try:
        Scenario.parse(cfg.experiment.scenario)
        resolve_roster(cfg.experiment.models)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.generate.model not in ("vae", "rvae"):
        raise ConfigError("generate.model must be vae or rvae")
    if cfg.simulate.mode not in ("argmax", "sample"):
        raise ConfigError("simulate.mode must be argmax or sample")
    if cfg.simulate.model not in ROSTER or ROSTER[cfg.simulate.model].kind != "tabular":
        raise ConfigError("simulate.model must name a tabular model")
    if cfg.stats.variant not in ("pooled", "welch"):
        raise ConfigError("stats.variant must be pooled or welch")
    if cfg.birnn.input_transform not in ("sigmoid", "tanh"):
        raise ConfigError("birnn.input_transform must be sigmoid or tanh")
    sp = cfg.split
    given = [v is not None for v in (sp.train_start, sp.train_end, sp.test_start, sp.test_end)]
    if any(given) and not all(given):
        raise ConfigError("split needs all of train_start, train_end, test_start, test_end or none")
    if all(given):
        try:
            Split(sp.train_start, sp.train_end, sp.test_start, sp.test_end)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    positive = {"synth.occupants": cfg.synth.occupants, "synth.days": cfg.synth.days,
                "experiment.top_features": cfg.experiment.top_features, "experiment.cv_folds": cfg.experiment.cv_folds - 1,
                "experiment.grid_budget": cfg.experiment.grid_budget, "generate.z_dim": cfg.generate.z_dim,
                "generate.epochs": cfg.generate.epochs, "generate.length": cfg.generate.length,
                "generate.segment_len": cfg.generate.segment_len,
                "generate.window": cfg.generate.window}
    for name, v in positive.items():
        if v < 1:
            raise ConfigError(f"{name} is out of range")
    if cfg.generate.n_perm < MIN_PERMUTATIONS:
        raise ConfigError(f"generate.n_perm must be at least {MIN_PERMUTATIONS}")


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_config(doc)


def _resource(name: str) -> ResourceKind:
    try:
        return ResourceKind.parse(name)
    except ValueError:
        pass
    raise ConfigError(f"unknown resource {name!r}; choose from {', '.join(r.value for r in RESOURCES)}")


def resolve_seed(cli_seed: int | None, cfg: ExperimentConfig, environ=os.environ) -> int:
    """``--seed`` beats ``SEQCHOICE_SEED``, which beats the config file."""
    if cli_seed is not None:
        return cli_seed
    env = environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return cfg.seed


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

@dataclass
class Run:
    cfg: ExperimentConfig
    seed: int
    jobs: int
    out: Path
    input: str | None
    scenario: Scenario

    def task_seed(self, name: str) -> int:
        return derive_seed(self.seed, name) % SEED_MOD

    def path(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p


def synth_config(run: Run) -> SynthConfig:
    s = run.cfg.synth
    if s.signal == "memoryless":
        signal = Memoryless(s.feature, 70.0 if s.threshold is None else s.threshold)
    elif s.signal == "markov2":
        signal = MarkovOrder2(s.persistence)
    else:
        signal = WeatherOnly() if s.threshold is None else WeatherOnly(s.threshold)
    return SynthConfig(occupants=s.occupants, days=s.days, planted_signal=signal,
                       noise_flip_prob=s.noise_flip_prob, seed=run.task_seed("synth"), start=s.start,
                       target=_resource(s.target), air_con=s.air_con)


def load_dataset(run: Run) -> Dataset:
    """``--input``, else ``data.path``, else the configured synthetic dataset."""
    path = run.input or run.cfg.data.path
    if path is None:
        log.info("no input dataset; generating the configured synthetic one")
        return synth_generate(synth_config(run))
    try:
        return read_dataset(path)
    except FileNotFoundError:
        raise UsageError(f"input file not found: {path}") from None


def calendar(run: Run) -> tuple:
    if run.cfg.data.calendar is None:
        return ()
    try:
        return tuple(read_calendar(run.cfg.data.calendar))
    except FileNotFoundError:
        raise UsageError(f"calendar file not found: {run.cfg.data.calendar}") from None


def resolve_split(run: Run, ds: Dataset) -> Split:
    """The configured split, or the last ~30% of days (at least one) as the test range."""
    sp = run.cfg.split
    if sp.train_start is not None:
        return Split(sp.train_start, sp.train_end, sp.test_start, sp.test_end)
    days = np.unique(ds.timestamps.astype("datetime64[D]"))
    if len(days) < 2:
        raise UsageError("need at least two days of data to derive a train/test split")
    n_test = max(1, int(round(0.3 * len(days))))
    as_date = [d.astype(dt.date) for d in days]
    return Split(as_date[0], as_date[-n_test - 1], as_date[-n_test], as_date[-1])


def resources(run: Run) -> list[ResourceKind]:
    names = run.cfg.experiment.resources
    return list(RESOURCES) if not names else [_resource(n) for n in names]


def settings(run: Run) -> ExperimentSettings:
    e, m, b = run.cfg.experiment, run.cfg.mlp, run.cfg.birnn
    mlp = replace(MLPConfig(), hidden_sizes=m.hidden_sizes, epochs=m.epochs, batch_size=m.batch_size,
                  dropout_p=m.dropout, batch_norm=m.batch_norm)
    birnn = BiRNNConfig(n_layers=b.n_layers, hidden_size=b.hidden_size, dropout_p=b.dropout, window=b.window,
                        batch_size=b.batch_size, lr0=b.lr0, decay=b.decay, momentum=b.momentum,
                        max_epochs=b.max_epochs, patience=b.patience, input_transform=b.input_transform)
    return ExperimentSettings(top_features=e.top_features, n_bins=e.n_bins, smote_k=e.smote_k,
                              smote_ratio=e.smote_ratio, cv_folds=e.cv_folds, grid_budget=e.grid_budget,
                              max_train_rows=e.max_train_rows, max_iter=e.max_iter, mlp=mlp, birnn=birnn,
                              calendar=calendar(run), seed=run.seed)


def roster(run: Run):
    specs = resolve_roster(run.cfg.experiment.models)
    return [replace(s, domains={**s.domains, **run.cfg.domains.get(s.name, {})}) for s in specs]


def parallel_map(fn, tasks, jobs: int):
    """Order-preserving map; results never depend on ``jobs``."""
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _training_rows(run: Run, ds: Dataset, occ: str, resource: ResourceKind, split: Split):
    """Scenario-filtered training features and labels of one cell, or ``None`` when not usable."""
    fm = scenario_filter(occupant_features(ds, occ, calendar(run)), run.scenario)
    if resource not in fm.labels:
        return None
    train = fm.between(split.train_start, split.train_end)
    y = train.labels[resource]
    if len(np.unique(y)) < 2:
        return None
    return train, y


def _cells(ds: Dataset, res: list[ResourceKind]):
    return [(occ, r) for occ in sorted(ds.occupant_ids) for r in res]


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(run: Run) -> None:
    if run.input is None and run.cfg.data.path is None:
        raise UsageError("ingest needs --input or data.path")
    ds = load_dataset(run)
    write_dataset(ds, run.path("dataset.csv"))
    log.info("wrote %d rows for %d occupants", len(ds), len(ds.occupant_ids))


def cmd_synth(run: Run) -> None:
    ds = synth_generate(synth_config(run))
    write_dataset(ds, run.path("synth.csv"))
    log.info("wrote %d synthetic rows", len(ds))


def cmd_featurize(run: Run) -> None:
    ds = load_dataset(run)
    fm = scenario_filter(pool_features(ds, calendar(run)), run.scenario)
    write_feature_matrix(fm, run.path("features.csv"))
    log.info("wrote %d rows x %d features", fm.n_rows, len(fm.names))


def cmd_select(run: Run) -> None:
    ds = load_dataset(run)
    split = resolve_split(run, ds)
    st = settings(run)
    rows = []
    for occ, r in _cells(ds, resources(run)):
        cell = _training_rows(run, ds, occ, r, split)
        if cell is None:
            continue
        train, y = cell
        k = min(st.top_features, len(train.names))
        sel = mrmr_select(discretize(train.X, st.n_bins, train.names), y, k)
        write_selection(sel, run.path(f"selection/{occ}_{r.value}.csv"))
        rows.extend([occ, r.value, i + 1, name, repr(score)]
                    for i, (name, score) in enumerate(zip(sel.features, sel.scores)))
    _write_rows(run.path("selection.csv"), ["occupant_id", "resource", "rank", "feature", "score"], rows)


def cmd_balance(run: Run) -> None:
    ds = load_dataset(run)
    split = resolve_split(run, ds)
    st = settings(run)
    summary = []
    for occ, r in _cells(ds, resources(run)):
        cell = _training_rows(run, ds, occ, r, split)
        if cell is None:
            continue
        train, y = cell
        names, _, train_std = select_and_scale(train, y, st)
        seed = derive_seed(run.seed, f"balance/{occ}/{r.value}") % SEED_MOD
        Xb, yb = balance_dataset(train_std.X, y, BalanceConfig(st.smote_k, st.smote_ratio, seed))
        _write_rows(run.path(f"balanced/{occ}_{r.value}.csv"), list(names) + ["label"],
                    ([repr(float(v)) for v in x] + [int(t)] for x, t in zip(Xb, yb)))
        summary.append([occ, r.value, len(y), int(y.sum()), len(yb), int(yb.sum())])
    _write_rows(run.path("balance_summary.csv"),
                ["occupant_id", "resource", "rows_before", "positives_before", "rows_after", "positives_after"],
                summary)


def _train_cell(task):
    run, ds, occ, r, split, spec = task
    cell = _training_rows(run, ds, occ, r, split)
    if cell is None:
        return None
    train, y = cell
    st = settings(run)
    seed = derive_seed(derive_seed(run.seed, f"cell/{occ}/{r.value}/{run.scenario.value}"), f"model/{spec.name}")
    names, stats, train_std = select_and_scale(train, y, st)
    rows = _subsample(train_std.n_rows, st.max_train_rows, derive_seed(seed, "subsample"))
    if len(np.unique(y[rows])) < 2:
        raise SingleClass("subsample holds a single class")
    model = fit_tabular(spec, train_std.X[rows], y[rows], st, seed)
    doc = to_document(model, names)
    doc["standardization"] = {"mean": encode(stats.mean), "sd": encode(stats.sd)}
    doc["cell"] = {"occupant_id": occ, "resource": r.value, "scenario": run.scenario.value}
    return json.dumps(doc, sort_keys=True, allow_nan=False) + "\n"


def cmd_train(run: Run) -> None:
    ds = load_dataset(run)
    split = resolve_split(run, ds)
    specs = [s for s in roster(run) if s.kind == "tabular"]
    skipped = [s.name for s in roster(run) if s.kind != "tabular"]
    if skipped:
        log.warning("train saves tabular models only; skipping %s", ", ".join(skipped))
    tasks = [(run, ds, occ, r, split, spec) for occ, r in _cells(ds, resources(run)) for spec in specs]
    for (_, _, occ, r, _, spec), text in zip(tasks, parallel_map(_train_cell, tasks, run.jobs)):
        if text is not None:
            run.path(f"models/{occ}_{r.value}_{spec.name}.json").write_text(text, encoding="utf-8")


def cmd_evaluate(run: Run) -> None:
    ds = load_dataset(run)
    split = resolve_split(run, ds)
    table = run_scenario_experiment(ds, split, run.scenario, resources(run), roster(run), settings(run),
                                    jobs=run.jobs)
    run.path("report.txt").write_text(table.render_text(), encoding="utf-8")
    run.path("report.html").write_text(table.render_html(), encoding="utf-8")
    table.write_csv(run.path("results.csv"))


def cmd_simulate(run: Run) -> None:
    ds = load_dataset(run)
    split = resolve_split(run, ds)
    st = settings(run)
    profile_cfg = ProfileSettings(run.cfg.simulate.model, run.scenario, split.train_start, split.train_end,
                                  replace(st, seed=run.task_seed("profiles")))
    agents = fit_agent_profiles(ds, profile_cfg, resources(run))
    pre = ds.between(split.train_start, split.train_end)
    try:
        baselines = compute_baselines(pre)
    except SeqChoiceError as exc:
        log.warning("no baselines (%s); points stay at zero", exc)
        baselines = {}
    stream = ds.between(split.test_start, split.test_end)
    per_occ = [len(stream.for_occupant(a.occupant_id)) for a in agents]
    horizon = run.cfg.simulate.horizon or min(per_occ)
    trace = simulate_game(agents, stream, horizon, baselines, mode=run.cfg.simulate.mode,
                          seed=run.task_seed("simulate"), calendar=st.calendar)
    write_trace(trace, stream, run.path("trace.csv"), baselines)
    ledger = update_rankings(PointsLedger({a.occupant_id: float(a.points[-1]) for a in trace.agents}))
    write_ledger(ledger, run.path("ledger.csv"))


def _dtw_task(task):
    name, a, b, n_perm, seed, segment_len = task
    res = permutation_test_dtw(a, b, n_perm, seed, segment_len)
    return name, res.observed, res.p_value


def cmd_generate(run: Run) -> None:
    ds = load_dataset(run)
    g = run.cfg.generate
    occ = g.occupant or sorted(ds.occupant_ids)[0]
    if occ not in ds.occupant_ids:
        raise UsageError(f"occupant {occ!r} not in dataset")
    part = ds.for_occupant(occ)
    part = part.take(np.argsort(part.timestamps, kind="stable"))
    X, channels = trace_channels(part)
    binary = channels.binary
    seed = run.task_seed("generate")
    length = min(g.length, len(X))
    if g.model == "vae":
        model, _ = vae_train(X, g.z_dim, VAEConfig(epochs=g.epochs, seed=seed), binary)
        S = vae_generate(model, length, seed=derive_seed(seed, "sample") % SEED_MOD)
    else:
        n = (len(X) // g.window) * g.window
        W = X[:n].reshape(-1, g.window, X.shape[1])
        model, _ = rvae_train(W, g.z_dim, RVAEConfig(epochs=g.epochs, seed=seed), binary)
        S = rvae_generate(model, length, seed=derive_seed(seed, "sample") % SEED_MOD)[0]
    start = part.timestamps[0].astype(dt.datetime)
    gen = traces_to_dataset(S, channels, start, occupant=f"gen_{occ}")
    write_dataset(gen, run.path("generated.csv"))
    original = X[:length]
    gen_X = np.where(binary[None, :], (S >= 0.5).astype(float), S)
    seg = min(g.segment_len, length)
    tasks = [(name, original[:, c], gen_X[:, c], g.n_perm, derive_seed(seed, f"perm/{name}") % SEED_MOD, seg)
             for c, name in enumerate(channels.names)]
    results = parallel_map(_dtw_task, tasks, run.jobs)
    _write_rows(run.path("dtw.csv"), ["channel", "dtw", "p_value"],
                ([name, repr(score), repr(p)] for name, score, p in results))


def cmd_stats(run: Run) -> None:
    s = run.cfg.stats
    if s.before and s.after:
        before, after = read_dataset(s.before), read_dataset(s.after)
    else:
        ds = load_dataset(run)
        split = resolve_split(run, ds)
        before = ds.between(split.train_start, split.train_end)
        after = ds.between(split.test_start, split.test_end)
    write_savings_csv(savings_table(before, after, s.variant), run.path("savings.csv"))
    if s.survey:
        survey = read_survey(s.survey)
        res = cronbach_alpha(survey)
        _write_rows(run.path("survey_alpha.csv"), ["n_items", "n_respondents", "alpha"],
                    [[res.n_items, survey.values.shape[0], repr(res.alpha)]])


COMMANDS = {
    "ingest": (cmd_ingest, "validate and canonicalize a dataset CSV"),
    "synth": (cmd_synth, "generate a synthetic dataset with a planted signal"),
    "featurize": (cmd_featurize, "pool features and apply the scenario filter"),
    "select": (cmd_select, "rank features by mRMR per occupant and resource"),
    "balance": (cmd_balance, "SMOTE-balance the selected training features"),
    "train": (cmd_train, "fit and save tabular models per occupant and resource"),
    "evaluate": (cmd_evaluate, "held-out AUC report over the model roster"),
    "simulate": (cmd_simulate, "closed-loop game simulation with fitted agents"),
    "generate": (cmd_generate, "train a trace model, generate traces, DTW-test them"),
    "stats": (cmd_stats, "savings t-tests and survey reliability"),
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="seqchoice", description="Occupant behaviour modelling pipeline.")
    p.add_argument("--version", action="version", version=f"seqchoice {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--config", help="TOML experiment file")
        sp.add_argument("--seed", type=int, help=f"root seed (overrides {SEED_ENV} and the config)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
        sp.add_argument("--scenario", help="step-ahead or sensor-free (overrides experiment.scenario)")
        sp.add_argument("--out", help="output directory (overrides out_dir)")
        sp.add_argument("--input", help="dataset CSV (overrides data.path)")
        sp.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    return p


def run_command(argv) -> int:
    parser = build_parser()
    argv = list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                            format="%(levelname)s %(message)s")
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        cfg = load_config(args.config)
        try:
            scenario = Scenario.parse(args.scenario or cfg.experiment.scenario)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        run = Run(cfg, resolve_seed(args.seed, cfg), args.jobs, Path(args.out or cfg.out_dir), args.input, scenario)
        run.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command][0](run)
    except SeqChoiceError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return exc.exit_status
    except OSError as exc:
        print(f"ERROR io: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
