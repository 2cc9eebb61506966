"""Sequential discrete game between fitted occupant agents.

Each agent holds one random utility per resource.  The aggregated utility
is a sum over resources with disjoint choice sets, so maximizing it jointly
is the same as maximizing each resource on its own.  The simulator steps
minute by minute, rebuilds the status-derived features from the agents' own
simulated actions, and scores every day with the points rule.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import RESOURCES, Dataset, ResourceKind, Scenario, scenario_filter, write_dataset
from .errors import SchemaMismatch, SeqChoiceError, StreamTooShort
from .evaluation import ROSTER, ExperimentSettings, _subsample, fit_tabular, occupant_features, select_and_scale
from .points import Baseline, PointsConfig, daily_points
from .prep import StandardizationStats
from .rng import as_rng, derive_seed

OFF, ON = 0, 1
CHOICES = ("off", "on")
NOT_INSTALLED = "not installed"


@dataclass(frozen=True)
class RandomUtility:
    """Choice model for one resource: feature schema, scaling and a fitted classifier."""

    resource: ResourceKind
    model: object
    feature_names: tuple
    stats: StandardizationStats | None = None
    choice_set: tuple = CHOICES
    noise: str = "gumbel"

    def probabilities(self, X) -> np.ndarray:
        """``(n, 2)`` probabilities of (off, on)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.stats is not None:
            X = self.stats.apply(X)
        p_on = np.clip(np.asarray(self.model.predict_proba(X), dtype=float).reshape(-1), 0.0, 1.0)
        return np.column_stack([1.0 - p_on, p_on])


@dataclass
class AgentProfile:
    occupant_id: str
    utilities: dict                                  # ResourceKind -> RandomUtility
    absent: dict = field(default_factory=dict)       # ResourceKind -> reason

    def resources(self) -> list[ResourceKind]:
        return [r for r in RESOURCES if r in self.utilities]


def per_resource_argmax(scores) -> np.ndarray:
    """Argmax over the choice axis of an ``(R, S)`` score array; ties take the lowest index (off)."""
    return np.argmax(np.asarray(scores, dtype=float), axis=-1)


def _vector(utility: RandomUtility, x) -> np.ndarray:
    if isinstance(x, Mapping):
        try:
            return np.array([x[n] for n in utility.feature_names], dtype=float)
        except KeyError as exc:
            raise SchemaMismatch(f"feature {exc.args[0]!r} missing for {utility.resource.value}") from None
    v = np.asarray(x, dtype=float)
    if v.shape[-1] != len(utility.feature_names):
        raise SchemaMismatch(f"{utility.resource.value} expects {len(utility.feature_names)} features")
    return v


def choice_probabilities(agent: AgentProfile, x) -> dict:
    """Resource -> (P(off), P(on)) at feature vector ``x`` (a name -> value mapping)."""
    return {r: agent.utilities[r].probabilities(_vector(agent.utilities[r], x))[0] for r in agent.resources()}


def _decide(probs: dict, mode: str, rng) -> dict:
    actions = {}
    for r in RESOURCES:
        if r not in probs:
            continue
        p = probs[r]
        if mode == "argmax":
            actions[r] = int(per_resource_argmax(p))
        elif mode == "sample":
            actions[r] = int(rng.random() < p[ON])
        else:
            raise ValueError(f"mode must be 'argmax' or 'sample', got {mode!r}")
    return actions


def aggregated_utility_choice(agent: AgentProfile, x, mode: str = "argmax", seed=None) -> dict:
    """Per-resource actions maximizing the agent's summed utility.

    ``argmax`` picks the more probable choice (ties to off); ``sample`` draws
    each resource from its choice distribution.
    """
    rng = as_rng(seed) if mode == "sample" else None
    return _decide(choice_probabilities(agent, x), mode, rng)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

@dataclass
class AgentTrace:
    occupant_id: str
    timestamps: np.ndarray
    actions: np.ndarray          # (T, 4); NaN where a resource is not installed
    probabilities: np.ndarray    # (T, 4) P(on); NaN where no utility exists
    usage: np.ndarray            # (T, 4) minutes on so far today, including this minute
    points: np.ndarray           # (T,) cumulative game points at each minute
    ranks: np.ndarray            # (T,)
    daily_points: list = field(default_factory=list)   # (date, {resource: points})


@dataclass
class SimulationTrace:
    agents: list
    horizon: int

    def for_agent(self, occupant_id: str) -> AgentTrace:
        for a in self.agents:
            if a.occupant_id == occupant_id:
                return a
        raise KeyError(occupant_id)


@dataclass
class _State:
    prev: np.ndarray
    usage: np.ndarray
    switches: np.ndarray
    minutes: int = 0
    day: object = None


def _agent_stream(stream: Dataset, occ: str, calendar):
    ids = stream.occupant_ids
    src = occ if occ in ids else ids[0]
    return occupant_features(stream, src, calendar)


def _score_day(base: Baseline | None, usage, weekend: bool, installed, cfg: PointsConfig) -> dict:
    out = {}
    if base is None:
        return out
    for r in installed:
        b = base.for_day(r, weekend)
        if b is not None:
            out[r] = daily_points(b, float(usage[r.index]), cfg.booster[r])
    return out


def simulate_game(agents: Sequence[AgentProfile], stream: Dataset, horizon: int, baselines: dict | None = None,
                  points_cfg: PointsConfig | None = None, mode: str = "argmax", seed=0,
                  calendar=(), installed: Sequence[ResourceKind] | None = None) -> SimulationTrace:
    """Closed-loop play over ``horizon`` minutes of the feature stream.

    Non-sensor inputs (weather, calendar, portal activity) come from the
    stream.  Status-derived features, game points and rank come from the
    simulation itself.  Each day, including a final partial day, is scored
    with the points rule.
    """
    baselines = baselines or {}
    cfg = points_cfg or PointsConfig()
    fms = {a.occupant_id: _agent_stream(stream, a.occupant_id, calendar) for a in agents}
    for occ, fm in fms.items():
        if fm.n_rows < horizon:
            raise StreamTooShort(f"stream has {fm.n_rows} usable minutes for {occ}, horizon is {horizon}")
    if installed is None:
        installed = [r for r in RESOURCES
                     if any(r in a.utilities or a.absent.get(r, NOT_INSTALLED) != NOT_INSTALLED for a in agents)]
    installed = list(installed)

    traces, states, cols = {}, {}, {}
    points = {a.occupant_id: 0.0 for a in agents}
    ranks = {a.occupant_id: 1 for a in agents}
    for a in agents:
        fm = fms[a.occupant_id]
        names = fm.names
        pos = {n: i for i, n in enumerate(names)}
        for r, u in a.utilities.items():
            missing = [n for n in u.feature_names if n not in pos]
            if missing:
                raise SchemaMismatch(f"stream lacks features {missing} for {a.occupant_id}/{r.value}")
        cols[a.occupant_id] = (pos, {r: np.array([pos[n] for n in u.feature_names]) for r, u in a.utilities.items()})
        T = horizon
        actions = np.full((T, 4), np.nan)
        actions[:, [r.index for r in installed]] = 0.0
        traces[a.occupant_id] = AgentTrace(a.occupant_id, fm.timestamps[:T].copy(), actions,
                                           np.full((T, 4), np.nan), np.full((T, 4), np.nan),
                                           np.zeros(T), np.zeros(T))
        states[a.occupant_id] = _State(np.zeros(4), np.zeros(4), np.zeros(4))

    rngs = {a.occupant_id: np.random.default_rng(derive_seed(seed, f"agent/{a.occupant_id}")) for a in agents}

    def close_day(a, st):
        weekend = ((np.datetime64(st.day, "D").astype(np.int64) + 3) % 7) >= 5
        pts = _score_day(baselines.get(a.occupant_id), st.usage, bool(weekend), installed, cfg)
        traces[a.occupant_id].daily_points.append((st.day, pts))
        points[a.occupant_id] += sum(pts.values())

    def rerank():
        order = sorted(points, key=lambda o: (-points[o], o))
        for i, o in enumerate(order):
            ranks[o] = i + 1

    for t in range(horizon):
        closed = False
        for a in agents:
            st = states[a.occupant_id]
            day = fms[a.occupant_id].timestamps[t].astype("datetime64[D]").astype(dt.date)
            if st.day is not None and day != st.day:
                close_day(a, st)
                closed = True
            if st.day != day:
                st.day = day
                st.prev[:] = 0.0
                st.usage[:] = 0.0
                st.switches[:] = 0.0
                st.minutes = 0
        if closed:
            rerank()
        for a in agents:
            occ = a.occupant_id
            st = states[occ]
            fm = fms[occ]
            pos, feat_idx = cols[occ]
            x = fm.X[t].copy()
            for r in installed:
                base = r.short
                for name, val in ((f"{base}_prev_status", st.prev[r.index]),
                                  (f"{base}_usage_min", st.usage[r.index]),
                                  (f"{base}_switches", st.switches[r.index]),
                                  (f"{base}_pct_usage", 100.0 * st.usage[r.index] / st.minutes if st.minutes else 0.0)):
                    if name in pos:
                        x[pos[name]] = val
            if "points_game" in pos:
                x[pos["points_game"]] = points[occ]
            if "rank" in pos:
                x[pos["rank"]] = ranks[occ]
            probs = {r: a.utilities[r].probabilities(x[feat_idx[r]])[0] for r in a.resources()}
            act = _decide(probs, mode, rngs[occ])
            tr = traces[occ]
            for r in installed:
                on = float(act.get(r, OFF))
                if st.minutes > 0 and on != st.prev[r.index]:
                    st.switches[r.index] += 1
                st.usage[r.index] += on
                st.prev[r.index] = on
                tr.actions[t, r.index] = on
                tr.usage[t, r.index] = st.usage[r.index]
                if r in probs:
                    tr.probabilities[t, r.index] = probs[r][ON]
            st.minutes += 1
            tr.points[t] = points[occ]
            tr.ranks[t] = ranks[occ]
    if horizon > 0:
        for a in agents:
            close_day(a, states[a.occupant_id])
    return SimulationTrace([traces[a.occupant_id] for a in agents], horizon)


def trace_dataset(trace: SimulationTrace, stream: Dataset, baselines: dict | None = None) -> tuple[Dataset, dict]:
    """The simulated trace in the dataset schema plus ``action_prob_<resource>`` columns."""
    from .data import concat

    baselines = baselines or {}
    parts, probs = [], []
    ids = stream.occupant_ids
    for a in trace.agents:
        src = stream.for_occupant(a.occupant_id if a.occupant_id in ids else ids[0])
        src = src.take(np.argsort(src.timestamps, kind="stable"))
        idx = np.searchsorted(src.timestamps, a.timestamps)
        n = len(a.timestamps)
        base = np.full((n, 4), np.nan)
        b = baselines.get(a.occupant_id)
        if b is not None:
            weekend = ((a.timestamps.astype("datetime64[D]").astype(np.int64) + 3) % 7) >= 5
            for r in RESOURCES:
                for k in range(n):
                    v = b.for_day(r, bool(weekend[k]))
                    base[k, r.index] = np.nan if v is None else v
        parts.append(Dataset(
            timestamps=a.timestamps,
            occupants=np.full(n, a.occupant_id, dtype=object),
            status=a.actions,
            usage=a.usage,
            baseline=base,
            points_game=a.points,
            points_survey=src.points_survey[idx],
            rank=a.ranks.astype(float),
            portal_visits=src.portal_visits[idx],
            weather=src.weather[idx],
        ))
        probs.append(a.probabilities)
    ds = concat(parts) if parts else None
    P = np.vstack(probs) if probs else np.zeros((0, 4))
    extra = {f"action_prob_{r.value}": P[:, r.index] for r in RESOURCES}
    return ds, extra


def write_trace(trace: SimulationTrace, stream: Dataset, target, baselines: dict | None = None) -> None:
    ds, extra = trace_dataset(trace, stream, baselines)
    write_dataset(ds, target, extra_columns=extra)


# ---------------------------------------------------------------------------
# fitting agents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProfileSettings:
    model: str = "logistic"
    scenario: Scenario = Scenario.STEP_AHEAD
    train_start: dt.date | None = None
    train_end: dt.date | None = None
    experiment: ExperimentSettings = ExperimentSettings()


def fit_agent_profiles(ds: Dataset, cfg: ProfileSettings = ProfileSettings(),
                       resources: Sequence[ResourceKind] = RESOURCES) -> list[AgentProfile]:
    """Fit one utility per (occupant, resource) with the evaluation training path.

    Resources whose training labels hold a single class (never or always
    used), or that are not installed, are marked absent.
    """
    spec = ROSTER[cfg.model]
    if spec.kind != "tabular":
        raise ValueError(f"agent utilities need a tabular model, got {cfg.model!r}")
    profiles = []
    for occ in sorted(ds.occupant_ids):
        fm = scenario_filter(occupant_features(ds, occ, cfg.experiment.calendar), cfg.scenario)
        if cfg.train_start is not None and cfg.train_end is not None:
            fm = fm.between(cfg.train_start, cfg.train_end)
        prof = AgentProfile(occ, {})
        for r in resources:
            if r not in fm.labels:
                prof.absent[r] = NOT_INSTALLED
                continue
            y = fm.labels[r]
            if len(np.unique(y)) < 2:
                prof.absent[r] = "single class"
                continue
            seed = derive_seed(cfg.experiment.seed, f"profile/{occ}/{r.value}")
            try:
                names, stats, train_std = select_and_scale(fm, y, cfg.experiment)
                rows = _subsample(len(y), cfg.experiment.max_train_rows, derive_seed(seed, "subsample"))
                model = fit_tabular(spec, train_std.X[rows], y[rows], cfg.experiment, seed)
            except SeqChoiceError as exc:
                prof.absent[r] = f"{exc.code}: {exc}"
                continue
            prof.utilities[r] = RandomUtility(r, model, tuple(names), stats)
        profiles.append(prof)
    return profiles
