import datetime as dt
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seqchoice.data import (
    CSV_COLUMNS, CalendarRange, Dataset, FeatureDescriptor, FeatureKind, FeatureMatrix, MarkovOrder2, Memoryless,
    ResourceKind, Scenario, SynthConfig, WeatherOnly, dataset_to_csv_text, day_so_far, from_daily_usage,
    make_windows, pool_features, read_calendar, read_dataset, scenario_filter, synth_generate, validate,
)
from seqchoice.errors import (
    BadValue, EmptyDataset, EmptyFile, InvalidConfig, MissingColumn, NoFeaturesLeft, NonMonotonicTimestamp,
    WindowTooLong,
)

HEADER = ",".join(CSV_COLUMNS)
ROW = "2018-02-19T00:05,occ01,1,0,1,,5,0,3,,420,300,600,,12.5,10,2,3,28.1,71.5,0,27.2,60.3"


def _csv(*rows, header=HEADER):
    return io.StringIO("\n".join([header, *rows]) + "\n")


def test_single_row_round_trips():
    ds = read_dataset(_csv(ROW))
    assert len(ds) == 1
    (rec,) = list(ds.records())
    assert rec.occupant_id == "occ01"
    assert rec.status[ResourceKind.CEILING_LIGHT] == 1
    assert rec.status[ResourceKind.AIR_CON] is None
    assert rec.usage_today[ResourceKind.CEILING_LIGHT] == 5
    assert rec.points_game == 12.5
    assert rec.rank == 2
    assert rec.ext_humidity_pct == 71.5
    text = dataset_to_csv_text(ds)
    assert text == HEADER + "\n" + ROW + "\n"
    assert dataset_to_csv_text(read_dataset(io.StringIO(text))) == text


def test_missing_rank_column():
    cols = list(CSV_COLUMNS)
    i = cols.index("rank")
    row = ROW.split(",")
    del cols[i], row[i]
    with pytest.raises(MissingColumn) as exc:
        read_dataset(_csv(",".join(row), header=",".join(cols)))
    assert exc.value.name == "rank"


def test_equal_timestamps_rejected():
    with pytest.raises(NonMonotonicTimestamp):
        read_dataset(_csv(ROW, ROW))


def test_empty_file_and_bad_values():
    with pytest.raises(EmptyFile):
        read_dataset(io.StringIO(""))
    with pytest.raises(EmptyFile):
        read_dataset(_csv())
    bad = ROW.replace("28.1", "warm")
    with pytest.raises(BadValue):
        read_dataset(_csv(bad))
    bad_status = "2018-02-19T00:05,occ01,2" + ROW[len("2018-02-19T00:05,occ01,1"):]
    with pytest.raises(BadValue):
        read_dataset(_csv(bad_status))


def test_synth_zero_noise_follows_rule_exactly():
    ds = synth_generate(SynthConfig(occupants=1, days=2, planted_signal=Memoryless("ext_humidity_pct", 70.0)))
    fan = ds.status[:, ResourceKind.CEILING_FAN.index]
    np.testing.assert_array_equal(fan, (ds.weather_column("ext_humidity_pct") > 70.0).astype(float))


def test_synth_weather_rule_and_counts():
    cfg = SynthConfig(occupants=2, days=7, planted_signal=WeatherOnly(), seed=4)
    ds = synth_generate(cfg)
    assert len(ds) == 20160
    t = ds.weather_column("ext_temp_c")
    h = ds.weather_column("ext_humidity_pct")
    np.testing.assert_array_equal(ds.status[:, 2], (t + 0.2 * (h - 70.0) > 29.0).astype(float))
    on = ds.status[:, 2].mean()
    assert 0.3 < on < 0.7


def test_synth_deterministic_and_markov_persistence():
    cfg = SynthConfig(occupants=1, days=2, planted_signal=MarkovOrder2(1.0), seed=9)
    a, b = synth_generate(cfg), synth_generate(cfg)
    assert dataset_to_csv_text(a) == dataset_to_csv_text(b)
    fan = a.status[:, 2]
    np.testing.assert_array_equal(fan[2:], fan[:-2])


def test_synth_invalid_config():
    with pytest.raises(InvalidConfig):
        synth_generate(SynthConfig(noise_flip_prob=0.6))
    with pytest.raises(InvalidConfig):
        synth_generate(SynthConfig(planted_signal=Memoryless("rank", 1.0)))


def test_synth_without_air_con():
    ds = synth_generate(SynthConfig(occupants=1, days=1, air_con=False))
    assert not ds.installed(ResourceKind.AIR_CON)


def test_day_so_far_hand_count():
    sw, pct = day_so_far(np.array([0, 1, 1, 0, 1]), np.zeros(5))
    assert sw[-1] == 3
    assert pct[-1] == 60.0


@given(st.lists(st.integers(0, 1), min_size=1, max_size=300), st.integers(1, 5))
def test_day_so_far_bounds(status, n_days):
    n = len(status)
    key = np.sort(np.random.default_rng(n).integers(0, n_days, n))
    sw, pct = day_so_far(np.array(status), key)
    assert np.all((pct >= 0) & (pct <= 100))
    elapsed = np.zeros(n)
    for i in range(n):
        elapsed[i] = i - np.flatnonzero(key == key[i])[0] + 1
    assert np.all(sw <= elapsed)


def test_pooled_features_summarize_the_day_before_each_minute():
    ds = from_daily_usage({ResourceKind.CEILING_FAN: [3]}, dt.date(2018, 2, 19), minutes_per_day=6)
    # status: 1,1,1,0,0,0
    fm = pool_features(ds)
    np.testing.assert_array_equal(fm.column("ceilfan_prev_status"), [0, 1, 1, 1, 0, 0])
    np.testing.assert_array_equal(fm.column("ceilfan_switches"), [0, 0, 0, 0, 1, 1])
    np.testing.assert_allclose(fm.column("ceilfan_pct_usage"), [0, 100, 100, 100, 75, 60])
    np.testing.assert_array_equal(fm.labels[ResourceKind.CEILING_FAN], [1, 1, 1, 0, 0, 0])


def test_calendar_and_weekend_dummies():
    ds = synth_generate(SynthConfig(occupants=1, days=7))
    cal = [CalendarRange("Midterm exams", dt.date(2018, 2, 21), dt.date(2018, 2, 22))]
    fm = pool_features(ds, cal)
    day = fm.timestamps.astype("datetime64[D]").astype(dt.date)
    exam = fm.column("college_midterm_exams")
    assert set(exam[(day >= cal[0].start) & (day <= cal[0].end)]) == {1.0}
    assert set(exam[day < cal[0].start]) == {0.0}
    saturday = day == dt.date(2018, 2, 24)
    assert set(fm.column("weekend")[saturday]) == {1.0}
    assert set(fm.column("weekday")[saturday]) == {0.0}
    assert not np.isnan(fm.X).any()


def test_read_calendar_file(tmp_path):
    p = tmp_path / "cal.csv"
    p.write_text("name,start_date,end_date\nbreak,2018-03-01,2018-03-05\n")
    assert read_calendar(p) == [CalendarRange("break", dt.date(2018, 3, 1), dt.date(2018, 3, 5))]
    p.write_text("break,2018-03-05,2018-03-01\n")
    with pytest.raises(BadValue):
        read_calendar(p)


def test_sensor_free_features_ignore_status_columns():
    ds = synth_generate(SynthConfig(occupants=1, days=2, seed=3))
    zeroed = Dataset(ds.timestamps, ds.occupants, np.zeros_like(ds.status), np.zeros_like(ds.usage), ds.baseline,
                     np.zeros_like(ds.points_game), ds.points_survey, np.ones_like(ds.rank), ds.portal_visits,
                     ds.weather)
    a = scenario_filter(pool_features(ds), Scenario.SENSOR_FREE)
    b = scenario_filter(pool_features(zeroed), Scenario.SENSOR_FREE)
    assert a.names == b.names
    np.testing.assert_array_equal(a.X, b.X)
    assert "room_temp_c" not in a.names and "ext_temp_c" in a.names


def _matrix(names, sensor):
    desc = tuple(FeatureDescriptor(n, FeatureKind.RAW, s) for n, s in zip(names, sensor))
    X = np.arange(3 * len(names), dtype=float).reshape(3, len(names))
    stamps = np.datetime64("2018-02-19T00:00") + np.arange(3).astype("timedelta64[m]")
    return FeatureMatrix(desc, X, {ResourceKind.CEILING_FAN: np.array([0, 1, 0], np.int8)}, stamps,
                         np.array(["o"] * 3, dtype=object))


def test_scenario_filter_examples():
    fm = _matrix(["ext_humidity_pct", "ceilfan_pct_usage", "weekend"], [False, True, False])
    assert scenario_filter(fm, Scenario.SENSOR_FREE).names == ["ext_humidity_pct", "weekend"]
    assert scenario_filter(fm, Scenario.STEP_AHEAD) is fm
    with pytest.raises(NoFeaturesLeft):
        scenario_filter(_matrix(["a", "b"], [True, True]), Scenario.SENSOR_FREE)


def test_pool_features_empty():
    ds = synth_generate(SynthConfig(occupants=1, days=1))
    with pytest.raises(EmptyDataset):
        pool_features(ds.take(np.zeros(len(ds), dtype=bool)))


def _row_matrix(n, occupants=None, gaps=()):
    minutes = np.arange(n)
    for g in gaps:
        minutes[g:] += 5
    stamps = np.datetime64("2018-02-19T00:00") + minutes.astype("timedelta64[m]")
    occ = np.array(occupants if occupants is not None else ["o"] * n, dtype=object)
    desc = (FeatureDescriptor("x", FeatureKind.RAW, False),)
    y = (np.arange(n) % 3 == 0).astype(np.int8)
    return FeatureMatrix(desc, np.arange(n, dtype=float)[:, None], {ResourceKind.CEILING_FAN: y}, stamps, occ)


def test_windows_count_and_identity():
    fm = _row_matrix(5)
    wt = make_windows(fm, ResourceKind.CEILING_FAN, 3)
    np.testing.assert_array_equal(wt.ends, [2, 3, 4])
    np.testing.assert_array_equal(wt.window(0)[:, 0], [0, 1, 2])
    w1 = make_windows(fm, ResourceKind.CEILING_FAN, 1)
    np.testing.assert_array_equal(w1.batch(np.arange(5))[:, 0, 0], fm.X[:, 0])
    assert len(make_windows(_row_matrix(20160), ResourceKind.CEILING_FAN, 120)) == 20041
    with pytest.raises(WindowTooLong):
        make_windows(fm, ResourceKind.CEILING_FAN, 6)


def test_windows_never_cross_occupants_or_gaps():
    fm = _row_matrix(10, occupants=["a"] * 5 + ["b"] * 5)
    assert list(make_windows(fm, ResourceKind.CEILING_FAN, 3).ends) == [2, 3, 4, 7, 8, 9]
    fm = _row_matrix(10, gaps=[4])
    assert list(make_windows(fm, ResourceKind.CEILING_FAN, 3).ends) == [2, 3, 6, 7, 8, 9]


@given(st.integers(1, 60), st.integers(1, 12))
def test_window_labels_follow_row_labels(n, N):
    if N > n:
        return
    fm = _row_matrix(n)
    wt = make_windows(fm, ResourceKind.CEILING_FAN, N)
    np.testing.assert_array_equal(wt.labels, fm.labels[ResourceKind.CEILING_FAN][N - 1:])


def test_validate_rejects_excess_usage():
    ds = from_daily_usage({ResourceKind.CEILING_LIGHT: [10]}, dt.date(2018, 2, 19), minutes_per_day=20)
    ds.usage[0, 0] = 5
    with pytest.raises(BadValue):
        validate(ds)
