"""Game points: baselines, the daily points rule, rankings and the lottery."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import MINUTES_PER_DAY, RESOURCES, Dataset, ResourceKind
from .errors import InsufficientHistory, NonPositiveBaseline, NotEnoughParticipants
from .rng import as_rng

MIN_HISTORY_DAYS = 7
ZERO_BASELINE_CLAMP = 1.0
DEFAULT_BOOSTER = 100.0
AWARD_PERIOD_DAYS = 14


@dataclass(frozen=True)
class Baseline:
    """Weekday and weekend baseline minutes per resource (absent = uninstalled)."""

    weekday_min: dict
    weekend_min: dict

    def for_day(self, resource: ResourceKind, weekend: bool) -> float | None:
        return (self.weekend_min if weekend else self.weekday_min).get(resource)


@dataclass(frozen=True)
class PointsConfig:
    booster: dict = field(default_factory=lambda: {r: DEFAULT_BOOSTER for r in RESOURCES})
    award_period_days: int = AWARD_PERIOD_DAYS

    def __post_init__(self):
        if any(s <= 0 for s in self.booster.values()):
            raise ValueError("boosters must be positive")


def daily_points(baseline: float, usage: float, booster: float = DEFAULT_BOOSTER) -> float:
    """Points for one resource-day: ``booster * (baseline - usage) / baseline``."""
    if baseline <= 0:
        raise NonPositiveBaseline(f"baseline must be positive, got {baseline}")
    return booster * (baseline - usage) / baseline


def daily_totals(ds: Dataset) -> dict:
    """Per occupant: ``(days, weekend flags, (n_days, 4) usage minutes)``.

    Daily usage is the last cumulative reading of the day; uninstalled
    resources stay NaN.
    """
    out = {}
    for occ in ds.occupant_ids:
        sub = ds.for_occupant(occ)
        day = sub.timestamps.astype("datetime64[D]")
        days, first = np.unique(day, return_index=True)
        last = np.append(first[1:], len(day)) - 1
        usage = sub.usage[last].copy()
        # fall back to counting on-minutes when the cumulative column is empty
        for r in RESOURCES:
            col = usage[:, r.index]
            if np.isnan(col).any() and not np.isnan(sub.status[:, r.index]).all():
                st = np.nan_to_num(sub.status[:, r.index])
                col[:] = np.add.reduceat(st, first)
        weekend = ((days.astype(np.int64) + 3) % 7) >= 5
        out[occ] = (days, weekend, usage)
    return out


def compute_baselines(pre_game: Dataset) -> dict:
    """Mean daily usage per resource, separately over weekdays and weekend days."""
    if len(pre_game) == 0:
        raise InsufficientHistory("<all>", "(empty dataset)")
    out = {}
    for occ, (days, weekend, usage) in daily_totals(pre_game).items():
        if len(days) < MIN_HISTORY_DAYS or not weekend.any() or weekend.all():
            raise InsufficientHistory(occ, f"({len(days)} days, {int(weekend.sum())} weekend)")
        wd, we = {}, {}
        for r in RESOURCES:
            col = usage[:, r.index]
            if np.isnan(col).all():
                continue
            wd[r] = max(float(np.nanmean(col[~weekend])), ZERO_BASELINE_CLAMP)
            we[r] = max(float(np.nanmean(col[weekend])), ZERO_BASELINE_CLAMP)
        out[occ] = Baseline(wd, we)
    return out


def score_days(ds: Dataset, baselines: dict, cfg: PointsConfig | None = None) -> dict:
    """Daily points per occupant, summed over installed resources.  Returns ``occ -> (days, points)``."""
    cfg = cfg or PointsConfig()
    out = {}
    for occ, (days, weekend, usage) in daily_totals(ds).items():
        base = baselines[occ]
        pts = np.zeros(len(days))
        for k in range(len(days)):
            for r in RESOURCES:
                b = base.for_day(r, bool(weekend[k]))
                u = usage[k, r.index]
                if b is None or np.isnan(u):
                    continue
                pts[k] += daily_points(b, u, cfg.booster[r])
        out[occ] = (days, pts)
    return out


@dataclass(frozen=True)
class PointsLedger:
    points: dict
    ranks: dict = field(default_factory=dict)

    def add(self, contributions: dict) -> "PointsLedger":
        merged = dict(self.points)
        for occ, p in contributions.items():
            merged[occ] = merged.get(occ, 0.0) + float(p)
        return update_rankings(PointsLedger(merged))


def update_rankings(ledger: PointsLedger) -> PointsLedger:
    """Rank by descending points; ties go to the smaller occupant id."""
    order = sorted(ledger.points, key=lambda occ: (-ledger.points[occ], occ))
    return PointsLedger(dict(ledger.points), {occ: i + 1 for i, occ in enumerate(order)})


def run_lottery(ledger: PointsLedger, winners: int, seed) -> list[str]:
    """Draw ``winners`` occupants without replacement, weight proportional to positive points."""
    ids = sorted(ledger.points)
    weights = np.array([max(ledger.points[i], 0.0) for i in ids])
    eligible = int((weights > 0).sum())
    if winners > eligible:
        raise NotEnoughParticipants(f"{winners} winners requested, {eligible} eligible")
    rng = as_rng(seed)
    chosen = []
    w = weights.copy()
    for _ in range(winners):
        k = int(rng.choice(len(ids), p=w / w.sum()))
        chosen.append(ids[k])
        w[k] = 0.0
    return chosen


def write_ledger(ledger: PointsLedger, target) -> None:
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="", encoding="utf-8") as fh:
            return write_ledger(ledger, fh)
    ledger = update_rankings(ledger) if not ledger.ranks else ledger
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(["occupant_id", "points", "rank"])
    for occ in sorted(ledger.points, key=lambda o: ledger.ranks[o]):
        writer.writerow([occ, repr(float(ledger.points[occ])), ledger.ranks[occ]])


__all__ = [
    "AWARD_PERIOD_DAYS", "Baseline", "MINUTES_PER_DAY", "PointsConfig", "PointsLedger",
    "compute_baselines", "daily_points", "daily_totals", "run_lottery", "score_days",
    "update_rankings", "write_ledger",
]
