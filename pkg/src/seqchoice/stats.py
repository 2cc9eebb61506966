"""Savings hypothesis tests and survey reliability."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import betainc

from .data import RESOURCES, Dataset
from .errors import BadValue, DegenerateSample, EmptyDataset, EmptyFile, MissingColumn, NonPositiveBefore, TooFewItems
from .points import daily_totals

NA = "N/A"


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p: float
    mean_a: float
    mean_b: float
    variant: str = "pooled"


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided tail of Student's t: ``I_{df/(df+t^2)}(df/2, 1/2)``."""
    if math.isinf(t):
        return 0.0
    return float(min(1.0, max(0.0, betainc(df / 2.0, 0.5, df / (df + t * t)))))


def two_sample_ttest(a, b, variant: str = "pooled") -> TTestResult:
    """Student (pooled variance) or Welch two-sample t-test with a two-sided p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise DegenerateSample("each sample needs at least two values")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0 and vb == 0:
        raise DegenerateSample("both samples have zero variance")
    na, nb = len(a), len(b)
    diff = a.mean() - b.mean()
    if variant == "pooled":
        df = na + nb - 2
        sp2 = ((na - 1) * va + (nb - 1) * vb) / df
        se = math.sqrt(sp2 * (1.0 / na + 1.0 / nb))
    elif variant == "welch":
        qa, qb = va / na, vb / nb
        se = math.sqrt(qa + qb)
        df = (qa + qb) ** 2 / (qa * qa / (na - 1) + qb * qb / (nb - 1))
    else:
        raise ValueError(f"variant must be 'pooled' or 'welch', got {variant!r}")
    t = diff / se
    return TTestResult(float(t), float(df), t_two_sided_p(t, df), float(a.mean()), float(b.mean()), variant)


def savings_delta(before_mean: float, after_mean: float) -> float:
    """Percentage reduction ``100 * (before - after) / before``."""
    if not before_mean > 0:
        raise NonPositiveBefore(f"before mean must be positive, got {before_mean}")
    # ratio form keeps the zero-after case at exactly 100
    return 100.0 * (1.0 - after_mean / before_mean)


def round_half_up(x: float, places: int = 1) -> float:
    """Decimal rounding with halves away from zero, applied to the shortest repr of ``x``."""
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


# ---------------------------------------------------------------------------
# savings tables
# ---------------------------------------------------------------------------

BEFORE_AFTER = "before_vs_after"
WEEKDAY_WEEKEND = "weekday_vs_weekend"


@dataclass(frozen=True)
class SavingsRow:
    device: str
    period: str           # weekday | weekend | all
    comparison: str       # before_vs_after | weekday_vs_weekend
    before_mean: float | None
    after_mean: float | None
    p: float | None
    delta_pct: float | None
    t: float | None = None
    status: str = "ok"

    @property
    def delta_rounded(self) -> float | None:
        return None if self.delta_pct is None else round_half_up(self.delta_pct, 1)


def _daily_samples(ds: Dataset):
    """Resource -> (weekday samples, weekend samples) of per-occupant daily usage minutes."""
    out = {r: ([], []) for r in RESOURCES}
    for days, weekend, usage in daily_totals(ds).values():
        for r in RESOURCES:
            col = usage[:, r.index]
            ok = ~np.isnan(col)
            out[r][0].extend(col[ok & ~weekend].tolist())
            out[r][1].extend(col[ok & weekend].tolist())
    return out


def _compare(device, period, comparison, x, y, variant, installed=True):
    if not installed:
        return SavingsRow(device, period, comparison, None, None, None, None, None, f"{NA}: device absent")
    if len(x) == 0 or len(y) == 0:
        return SavingsRow(device, period, comparison, None, None, None, None, None, f"{NA}: no days in period")
    mx, my = float(np.mean(x)), float(np.mean(y))
    try:
        delta = savings_delta(mx, my)
    except NonPositiveBefore:
        delta = None
    try:
        tt = two_sample_ttest(x, y, variant)
    except DegenerateSample as exc:
        return SavingsRow(device, period, comparison, mx, my, None, delta, None, f"{NA}: {exc}")
    return SavingsRow(device, period, comparison, mx, my, tt.p, delta, tt.t)


def savings_table(before: Dataset, after: Dataset, variant: str = "pooled") -> list[SavingsRow]:
    """Before/after rows per device and period, then weekday/weekend rows on the ``after`` data."""
    if len(before) == 0 or len(after) == 0:
        raise EmptyDataset("savings need both a before and an after dataset")
    sb, sa = _daily_samples(before), _daily_samples(after)
    rows = []
    for r in RESOURCES:
        both = before.installed(r) and after.installed(r)
        for k, period in enumerate(("weekday", "weekend")):
            rows.append(_compare(r.value, period, BEFORE_AFTER, sb[r][k], sa[r][k], variant, both))
    for r in RESOURCES:
        rows.append(_compare(r.value, "all", WEEKDAY_WEEKEND, sa[r][0], sa[r][1], variant, after.installed(r)))
    return rows


def _num(v, fmt):
    return "" if v is None else fmt.format(v)


def write_savings_csv(rows: Sequence[SavingsRow], target) -> None:
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="", encoding="utf-8") as fh:
            return write_savings_csv(rows, fh)
    w = csv.writer(target, lineterminator="\n")
    w.writerow(["device", "period", "comparison", "before_mean", "after_mean", "p_value", "delta_pct", "status"])
    for row in rows:
        w.writerow([row.device, row.period, row.comparison,
                    "" if row.before_mean is None else f"{round_half_up(row.before_mean, 1):.1f}",
                    "" if row.after_mean is None else f"{round_half_up(row.after_mean, 1):.1f}",
                    _num(row.p, "{:.3g}"),
                    "" if row.delta_pct is None else f"{row.delta_rounded:.1f}",
                    row.status])


# ---------------------------------------------------------------------------
# Likert surveys
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LikertSurvey:
    values: np.ndarray          # (respondents, items) in 1..5
    reverse: np.ndarray         # (items,) bool: phrased in the opposite direction
    items: tuple = ()
    respondents: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != len(self.reverse):
            raise ValueError("values must be (respondents, items) with one polarity flag per item")
        if np.any((v < 1) | (v > 5) | (v != np.round(v))):
            raise ValueError("Likert values must be integers in 1..5")

    def recoded(self) -> np.ndarray:
        v = np.asarray(self.values, dtype=float)
        return np.where(np.asarray(self.reverse, dtype=bool)[None, :], 6.0 - v, v)


@dataclass(frozen=True)
class CronbachResult:
    alpha: float
    n_items: int
    p_value: float | None = None


def cronbach_alpha(survey: LikertSurvey, items: Sequence[int] | None = None, recode: bool = True,
                   p_value: float | None = None) -> CronbachResult:
    """``k/(k-1) * (1 - sum of item variances / variance of the total score)``.

    A subset of item positions may be given.  When the total score is
    constant while items vary (a perfectly anti-correlated pair), the
    coefficient diverges and ``-inf`` is returned.
    """
    V = survey.recoded() if recode else np.asarray(survey.values, dtype=float)
    if items is not None:
        V = V[:, list(items)]
    k = V.shape[1]
    if k < 2:
        raise TooFewItems(f"need at least two items, got {k}")
    if V.shape[0] < 2:
        raise DegenerateSample("need at least two respondents")
    item_var = V.var(axis=0, ddof=1).sum()
    total_var = V.sum(axis=1).var(ddof=1)
    if total_var == 0:
        if item_var == 0:
            raise DegenerateSample("every item is constant")
        return CronbachResult(-math.inf, k, p_value)
    return CronbachResult(float(k / (k - 1) * (1.0 - item_var / total_var)), k, p_value)


def read_survey(source) -> LikertSurvey:
    """Long-format CSV ``respondent_id,item_id,value,reverse_coded``."""
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return read_survey(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        raise EmptyFile("survey file is empty")
    header = [h.strip() for h in header]
    for col in ("respondent_id", "item_id", "value", "reverse_coded"):
        if col not in header:
            raise MissingColumn(col)
    pos = {h: i for i, h in enumerate(header)}
    cells, reverse = {}, {}
    resp_order, item_order = {}, {}
    for row_no, row in enumerate(reader):
        if not row:
            continue
        rid, iid = row[pos["respondent_id"]].strip(), row[pos["item_id"]].strip()
        try:
            value = int(row[pos["value"]])
        except ValueError:
            raise BadValue(row_no, "value", "not an integer") from None
        if not 1 <= value <= 5:
            raise BadValue(row_no, "value", "outside 1..5")
        flag = row[pos["reverse_coded"]].strip().lower()
        if flag not in ("0", "1", "true", "false"):
            raise BadValue(row_no, "reverse_coded", "expected 0/1/true/false")
        rev = flag in ("1", "true")
        if reverse.setdefault(iid, rev) != rev:
            raise BadValue(row_no, "reverse_coded", f"inconsistent polarity for item {iid!r}")
        resp_order.setdefault(rid, len(resp_order))
        item_order.setdefault(iid, len(item_order))
        cells[(rid, iid)] = value
    if not cells:
        raise EmptyFile("survey has no responses")
    V = np.full((len(resp_order), len(item_order)), np.nan)
    for (rid, iid), v in cells.items():
        V[resp_order[rid], item_order[iid]] = v
    if np.isnan(V).any():
        keep = ~np.isnan(V).any(axis=1)   # listwise deletion of incomplete respondents
        V = V[keep]
        resp = tuple(r for r, k in zip(resp_order, keep) if k)
    else:
        resp = tuple(resp_order)
    return LikertSurvey(V, np.array([reverse[i] for i in item_order]), tuple(item_order), resp)
