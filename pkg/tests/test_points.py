import datetime as dt
import io
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chisquare

from seqchoice.data import ResourceKind, concat, from_daily_usage
from seqchoice.errors import InsufficientHistory, NonPositiveBaseline, NotEnoughParticipants
from seqchoice.points import (
    ZERO_BASELINE_CLAMP, PointsConfig, PointsLedger, compute_baselines, daily_points, run_lottery, score_days,
    update_rankings, write_ledger,
)

MONDAY = dt.date(2018, 2, 19)
LIGHT = ResourceKind.CEILING_LIGHT


def test_daily_points_examples():
    assert daily_points(100, 100, 10) == 0
    assert daily_points(100, 80, 10) == 2.0
    assert daily_points(100, 120, 10) == -2.0
    with pytest.raises(NonPositiveBaseline):
        daily_points(0, 10, 10)


def test_baseline_weekday_weekend_with_zero_clamp():
    # Mon..Sun: 60 min every weekday, nothing on the weekend
    ds = from_daily_usage({LIGHT: [60] * 5 + [0, 0]}, MONDAY)
    (b,) = compute_baselines(ds).values()
    assert b.weekday_min[LIGHT] == 60.0
    assert b.weekend_min[LIGHT] == ZERO_BASELINE_CLAMP
    assert ResourceKind.AIR_CON not in b.weekday_min


def test_baseline_is_mean_of_weekdays():
    ds = from_daily_usage({LIGHT: [30, 60, 90, 60, 60, 10, 20]}, MONDAY)
    (b,) = compute_baselines(ds).values()
    assert b.weekday_min[LIGHT] == 60.0
    assert b.weekend_min[LIGHT] == 15.0


def test_baseline_needs_history():
    ds = from_daily_usage({LIGHT: [60] * 7}, MONDAY)
    with pytest.raises(InsufficientHistory):
        compute_baselines(ds.take(np.zeros(len(ds), dtype=bool)))
    with pytest.raises(InsufficientHistory):
        compute_baselines(from_daily_usage({LIGHT: [60] * 5}, MONDAY))


def test_score_days_uses_weekday_or_weekend_baseline():
    pre = from_daily_usage({LIGHT: [100] * 5 + [50, 50]}, MONDAY)
    base = compute_baselines(pre)
    game = from_daily_usage({LIGHT: [80, 100, 120, 100, 100, 25, 50]}, MONDAY + dt.timedelta(days=7))
    cfg = PointsConfig(booster={r: 10.0 for r in ResourceKind})
    (days, pts), = score_days(game, base, cfg).values()
    np.testing.assert_allclose(pts, [2.0, 0.0, -2.0, 0.0, 0.0, 5.0, 0.0])


def test_rankings():
    assert update_rankings(PointsLedger({"A": 5, "B": 3})).ranks == {"A": 1, "B": 2}
    assert update_rankings(PointsLedger({"B": 5, "A": 5})).ranks == {"A": 1, "B": 2}
    assert update_rankings(PointsLedger({})).ranks == {}
    led = PointsLedger({"A": 1.0}).add({"B": 2.0, "A": 0.5})
    assert led.points == {"A": 1.5, "B": 2.0}
    assert led.ranks == {"B": 1, "A": 2}


@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=3), st.floats(-1e3, 1e3), max_size=20))
def test_rankings_are_a_permutation(points):
    led = update_rankings(PointsLedger(points))
    assert sorted(led.ranks.values()) == list(range(1, len(points) + 1))
    if points:
        top = [o for o, r in led.ranks.items() if r == 1][0]
        assert led.points[top] == max(points.values())


def test_lottery_examples():
    assert run_lottery(PointsLedger({"A": 3.0}), 1, seed=0) == ["A"]
    with pytest.raises(NotEnoughParticipants):
        run_lottery(PointsLedger({"A": -5.0}), 1, seed=0)
    rng = np.random.default_rng(0)
    wins = Counter(run_lottery(PointsLedger({"A": 30.0, "B": 10.0}), 1, rng)[0] for _ in range(100_000))
    assert abs(wins["A"] / 100_000 - 0.75) <= 0.01


def test_lottery_frequencies_pass_chi_square():
    pts = {"A": 10.0, "B": 20.0, "C": 30.0, "D": 40.0, "E": -3.0}
    rng = np.random.default_rng(1)
    n = 100_000
    wins = Counter(run_lottery(PointsLedger(pts), 1, rng)[0] for _ in range(n))
    assert wins["E"] == 0
    obs = [wins[k] for k in "ABCD"]
    exp = [n * pts[k] / 100.0 for k in "ABCD"]
    assert chisquare(obs, exp).pvalue > 0.01


def test_lottery_draws_without_replacement_and_is_seeded():
    led = PointsLedger({"A": 1.0, "B": 2.0, "C": 3.0})
    w = run_lottery(led, 3, seed=5)
    assert sorted(w) == ["A", "B", "C"]
    assert run_lottery(led, 2, seed=5) == run_lottery(led, 2, seed=5)


def test_write_ledger():
    buf = io.StringIO()
    write_ledger(PointsLedger({"b": 1.0, "a": 2.5}), buf)
    assert buf.getvalue() == "occupant_id,points,rank\na,2.5,1\nb,1.0,2\n"


def test_two_occupant_baselines():
    a = from_daily_usage({LIGHT: [60] * 7}, MONDAY, occupant="a")
    b = from_daily_usage({LIGHT: [30] * 7}, MONDAY, occupant="b")
    base = compute_baselines(concat([a, b]))
    assert base["a"].weekday_min[LIGHT] == 60.0
    assert base["b"].weekend_min[LIGHT] == 30.0
