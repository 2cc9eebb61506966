"""Shared fixtures and the acceptance summary printed at the end of a run."""
import datetime as dt

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_TITLES = {
    1: "savings arithmetic reproduces printed deltas",
    2: "daily points rule",
    3: "AUC against pair counting",
    4: "mRMR against brute-force re-evaluation",
    5: "SMOTE segments and post-balance ratio",
    6: "gradient checks",
    7: "planted-signal pipeline",
    8: "DTW against recursive brute force",
    9: "permutation test calibration",
    10: "t-test and Cronbach alpha",
    11: "game separability and sampling",
    12: "CLI determinism",
}

_results: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): test belongs to acceptance criterion n")
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    n = getattr(report, "acceptance", None)
    if n is not None:
        _results.setdefault(n, []).append(report.outcome == "passed")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        rep.acceptance = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        ok = all(_results[n])
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {ACCEPTANCE_TITLES.get(n, '')}"
                                    f"  ({sum(_results[n])}/{len(_results[n])} checks)")


WEEK_START = dt.date(2018, 2, 19)   # a Monday
