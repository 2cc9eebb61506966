import datetime as dt
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from seqchoice.data import ResourceKind, from_daily_usage
from seqchoice.errors import BadValue, DegenerateSample, NonPositiveBefore, TooFewItems
from seqchoice.stats import (
    BEFORE_AFTER, NA, WEEKDAY_WEEKEND, LikertSurvey, cronbach_alpha, read_survey, round_half_up, savings_delta,
    savings_table, t_two_sided_p, two_sample_ttest, write_savings_csv,
)

LIGHT, AC = ResourceKind.CEILING_LIGHT, ResourceKind.AIR_CON
MONDAY = dt.date(2018, 2, 19)
samples = st.lists(st.integers(-50, 50), min_size=2, max_size=15)


def test_ttest_hand_case():
    r = two_sample_ttest([1, 2, 3], [4, 5, 6])
    assert abs(r.t + 3.674) < 1e-3 and r.df == 4
    assert abs(r.p - 0.021) < 1e-3
    ref = sps.ttest_ind([1, 2, 3], [4, 5, 6])
    assert abs(r.p - ref.pvalue) < 1e-10


def test_ttest_identical_and_degenerate():
    r = two_sample_ttest([1.0, 2.0, 4.0], [1.0, 2.0, 4.0])
    assert r.t == 0.0 and r.p == 1.0
    with pytest.raises(DegenerateSample):
        two_sample_ttest([1.0], [2.0, 3.0])
    with pytest.raises(DegenerateSample):
        two_sample_ttest([2.0, 2.0], [3.0, 3.0])
    with pytest.raises(ValueError):
        two_sample_ttest([1, 2], [3, 5], variant="paired")


def test_welch_matches_reference():
    a, b = [1.0, 2.0, 3.0, 9.0], [4.0, 5.0, 5.5]
    r = two_sample_ttest(a, b, "welch")
    ref = sps.ttest_ind(a, b, equal_var=False)
    assert abs(r.t - ref.statistic) < 1e-12 and abs(r.p - ref.pvalue) < 1e-10


@pytest.mark.parametrize("df", [1, 2, 5, 30])
@pytest.mark.parametrize("t", [0.0, 0.5, 2.0, -4.0])
def test_t_tail_against_reference(t, df):
    assert abs(t_two_sided_p(t, df) - 2 * sps.t.sf(abs(t), df)) < 1e-10


@given(samples, samples, st.integers(-100, 100), st.integers(1, 20))
def test_ttest_symmetry_and_invariances(a, b, c, k):
    a, b = np.array(a, float), np.array(b, float)
    if a.var() == 0 and b.var() == 0:
        return
    r = two_sample_ttest(a, b)
    assert 0.0 <= r.p <= 1.0
    s = two_sample_ttest(b, a)
    assert s.t == pytest.approx(-r.t, abs=1e-12) and s.p == pytest.approx(r.p, abs=1e-12)
    assert two_sample_ttest(a + c, b + c).p == pytest.approx(r.p, abs=1e-9)
    assert two_sample_ttest(a * k, b * k).p == pytest.approx(r.p, abs=1e-9)


def test_savings_delta_examples():
    assert abs(savings_delta(402.2, 157.5) - 60.8) < 0.05
    assert abs(savings_delta(663.5, 537.6) - 19.0) < 0.05
    assert savings_delta(417.5, 417.5) == 0.0
    assert savings_delta(123.4, 0.0) == 100.0
    with pytest.raises(NonPositiveBefore):
        savings_delta(0.0, 1.0)


@given(st.floats(1e-3, 1e6))
def test_full_saving_is_exactly_one_hundred(b):
    assert savings_delta(b, 0.0) == 100.0


def test_round_half_up():
    assert round_half_up(5.65) == 5.7
    assert round_half_up(0.05) == 0.1
    assert round_half_up(-2.25) == -2.3


def _two_weeks(weekday_vals, weekend_vals, **extra):
    # Monday start: five weekdays then two weekend days, twice
    days = weekday_vals[:5] + weekend_vals[:2] + weekday_vals[5:10] + weekend_vals[2:4]
    usage = {LIGHT: days}
    usage.update({r: [30] * 14 for r in extra.get("also", [])})
    return from_daily_usage(usage, MONDAY)


def test_savings_table_reproduces_ceiling_light_row():
    before = _two_weeks([417, 418] * 5, [200, 210, 220, 230])
    after = _two_weeks([394] * 9 + [393], [190, 200, 210, 220])
    rows = savings_table(before, after)
    row = next(r for r in rows if r.device == LIGHT.value and r.period == "weekday" and r.comparison == BEFORE_AFTER)
    assert row.before_mean == 417.5 and abs(row.after_mean - 393.9) < 1e-9
    assert abs(row.delta_pct - 5.6527) < 1e-4 and row.delta_rounded == 5.7
    assert row.p < 1e-6 and row.status == "ok"


def test_savings_table_null_case_and_absent_device():
    ds = _two_weeks([400, 410, 420, 430, 440] * 2, [100, 120, 140, 160])
    rows = savings_table(ds, ds)
    light = [r for r in rows if r.device == LIGHT.value and r.comparison == BEFORE_AFTER]
    assert all(r.delta_pct == 0.0 and r.p == 1.0 for r in light)
    ac = [r for r in rows if r.device == AC.value]
    assert len(ac) == 3 and all(r.status.startswith(NA) and r.p is None for r in ac)
    ww = next(r for r in rows if r.device == LIGHT.value and r.comparison == WEEKDAY_WEEKEND)
    assert ww.before_mean == 420.0 and ww.after_mean == 130.0
    out = io.StringIO()
    write_savings_csv(rows, out)
    lines = out.getvalue().splitlines()
    assert lines[0] == "device,period,comparison,before_mean,after_mean,p_value,delta_pct,status"
    assert any(line.startswith("ac,weekday,before_vs_after,,,,,N/A") for line in lines)


def test_cronbach_examples():
    x = np.array([1, 2, 4, 5])
    same = LikertSurvey(np.c_[x, x], np.array([False, False]))
    assert cronbach_alpha(same).alpha == 1.0
    anti = LikertSurvey(np.c_[x, 6 - x, x], np.array([False, False, False]))
    assert cronbach_alpha(anti).alpha < 0
    assert cronbach_alpha(anti, items=[0, 2]).alpha == 1.0
    flagged = LikertSurvey(np.c_[x, 6 - x], np.array([False, True]))
    assert cronbach_alpha(flagged).alpha == 1.0
    assert cronbach_alpha(flagged, recode=False).alpha == -np.inf
    with pytest.raises(TooFewItems):
        cronbach_alpha(same, items=[0])


@given(st.lists(st.lists(st.integers(1, 5), min_size=3, max_size=3), min_size=2, max_size=20))
def test_cronbach_never_exceeds_one(rows):
    V = np.array(rows)
    s = LikertSurvey(V, np.zeros(3, dtype=bool))
    try:
        a = cronbach_alpha(s).alpha
    except DegenerateSample:
        return
    assert a <= 1.0 + 1e-12


def test_read_survey_long_format():
    text = ("respondent_id,item_id,value,reverse_coded\n"
            "r1,q1,4,0\nr1,q2,2,1\nr2,q1,2,0\nr2,q2,4,1\nr3,q1,5,0\nr3,q2,1,1\nr4,q1,3,0\n")
    s = read_survey(io.StringIO(text))
    assert s.items == ("q1", "q2") and s.respondents == ("r1", "r2", "r3")
    np.testing.assert_array_equal(s.recoded(), [[4, 4], [2, 2], [5, 5]])
    assert cronbach_alpha(s).alpha == 1.0
    with pytest.raises(BadValue):
        read_survey(io.StringIO("respondent_id,item_id,value,reverse_coded\nr1,q1,7,0\n"))
