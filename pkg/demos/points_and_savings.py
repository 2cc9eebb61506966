"""Game points, baselines and before/after savings on a hand-built dataset.

Run: python demos/points_and_savings.py
"""
import datetime as dt
import sys

from seqchoice.data import ResourceKind, from_daily_usage
from seqchoice.points import daily_points
from seqchoice.stats import savings_delta, savings_table, two_sample_ttest, write_savings_csv

LIGHT = ResourceKind.CEILING_LIGHT

# Points reward usage below the baseline and penalize usage above it.
print("baseline 120 min, used 60 min, booster 10 ->", daily_points(120.0, 60.0, 10.0))
print("baseline 120 min, used 180 min, booster 10 ->", daily_points(120.0, 180.0, 10.0))

# Savings percentages from published before/after means.
print("desk light weekday: %.1f%%" % savings_delta(402.2, 157.5))
print("ceiling fan weekday: %.1f%%" % savings_delta(663.5, 537.6))

# A two-sample t-test on a toy pair of samples.
r = two_sample_ttest([1, 2, 3], [4, 5, 6])
print(f"t = {r.t:.3f}, df = {r.df:g}, p = {r.p:.3f}")

# Two weeks before and after a game: weekday light usage drops from 417.5 to 393.9 minutes a day.
monday = dt.date(2018, 2, 19)


def two_weeks(weekdays, weekends):
    days = weekdays[:5] + weekends[:2] + weekdays[5:] + weekends[2:]
    return from_daily_usage({LIGHT: days}, monday)


before = two_weeks([417, 418] * 5, [200, 210, 220, 230])
after = two_weeks([394] * 9 + [393], [190, 200, 210, 220])
print("\nsavings table (only the ceiling light is installed, so other rows are N/A):")
write_savings_csv(savings_table(before, after), sys.stdout)
