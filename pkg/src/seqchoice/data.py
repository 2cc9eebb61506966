"""Per-minute occupant data: schema, CSV I/O, synthetic traces, pooled features.

A :class:`Dataset` is columnar.  Rows are grouped by occupant (first
appearance order) and time-ordered inside each group.  A resource whose
status column is entirely empty is treated as not installed in that room.
"""
from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    BadValue,
    EmptyDataset,
    EmptyFile,
    InvalidConfig,
    MissingColumn,
    NoFeaturesLeft,
    NonMonotonicTimestamp,
    WindowTooLong,
)
from .rng import derive_seed

MINUTES_PER_DAY = 1440
FFILL_LIMIT_MIN = 15
MORNING_START_H = 6
MORNING_END_H = 18
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M"


class ResourceKind(enum.Enum):
    CEILING_LIGHT = "ceiling_light"
    DESK_LIGHT = "desk_light"
    CEILING_FAN = "ceiling_fan"
    AIR_CON = "ac"

    @property
    def short(self) -> str:
        return _SHORT[self]

    @property
    def index(self) -> int:
        return RESOURCES.index(self)

    @classmethod
    def parse(cls, text: str) -> "ResourceKind":
        key = text.strip().lower().replace("-", "_")
        for r in cls:
            if key in (r.value, r.short, r.name.lower()):
                return r
        raise ValueError(f"unknown resource {text!r}")


_SHORT = {
    ResourceKind.CEILING_LIGHT: "ceillight",
    ResourceKind.DESK_LIGHT: "desklight",
    ResourceKind.CEILING_FAN: "ceilfan",
    ResourceKind.AIR_CON: "ac",
}
RESOURCES: tuple[ResourceKind, ...] = tuple(ResourceKind)

WEATHER_COLUMNS = ("ext_temp_c", "ext_humidity_pct", "ext_solar_wm2", "room_temp_c", "room_humidity_pct")
# room readings come from the in-room IoT tag
SENSOR_WEATHER = frozenset({"room_temp_c", "room_humidity_pct"})

STATUS_COLUMNS = tuple(f"{r.value}_status" for r in RESOURCES)
USAGE_COLUMNS = tuple(f"{r.value}_usage_min" for r in RESOURCES)
BASELINE_COLUMNS = tuple(f"{r.value}_baseline_min" for r in RESOURCES)

CSV_COLUMNS = (
    ("timestamp", "occupant_id")
    + STATUS_COLUMNS
    + USAGE_COLUMNS
    + BASELINE_COLUMNS
    + ("points_game", "points_survey", "rank", "portal_visits")
    + WEATHER_COLUMNS
)


# ---------------------------------------------------------------------------
# records and datasets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OccupantRecord:
    """Row view of one occupant-minute.  ``None`` marks a missing value."""

    timestamp: dt.datetime
    occupant_id: str
    status: dict
    usage_today: dict
    baseline: dict
    points_game: float
    points_survey: float
    rank: int | None
    portal_visits: int
    ext_temp_c: float | None = None
    ext_humidity_pct: float | None = None
    ext_solar_wm2: float | None = None
    room_temp_c: float | None = None
    room_humidity_pct: float | None = None


def _nan_to_none(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


@dataclass(frozen=True, eq=False)
class Dataset:
    timestamps: np.ndarray        # datetime64[m]
    occupants: np.ndarray         # str objects
    status: np.ndarray            # (n, 4) float, NaN = missing
    usage: np.ndarray             # (n, 4) float minutes since midnight
    baseline: np.ndarray          # (n, 4) float, NaN = missing
    points_game: np.ndarray
    points_survey: np.ndarray
    rank: np.ndarray              # float, NaN = missing
    portal_visits: np.ndarray     # int
    weather: np.ndarray           # (n, 5) float, NaN = missing

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def occupant_ids(self) -> list[str]:
        seen = dict.fromkeys(self.occupants.tolist())
        return list(seen)

    def installed(self, resource: ResourceKind) -> bool:
        return bool(np.any(~np.isnan(self.status[:, resource.index])))

    def weather_column(self, name: str) -> np.ndarray:
        return self.weather[:, WEATHER_COLUMNS.index(name)]

    def take(self, index) -> "Dataset":
        return Dataset(
            timestamps=self.timestamps[index],
            occupants=self.occupants[index],
            status=self.status[index],
            usage=self.usage[index],
            baseline=self.baseline[index],
            points_game=self.points_game[index],
            points_survey=self.points_survey[index],
            rank=self.rank[index],
            portal_visits=self.portal_visits[index],
            weather=self.weather[index],
        )

    def for_occupant(self, occupant_id: str) -> "Dataset":
        return self.take(self.occupants == occupant_id)

    def between(self, start: dt.date, end: dt.date) -> "Dataset":
        """Rows whose calendar day lies in ``[start, end]``."""
        days = self.timestamps.astype("datetime64[D]")
        mask = (days >= np.datetime64(start, "D")) & (days <= np.datetime64(end, "D"))
        return self.take(mask)

    def gaps(self) -> list[tuple[str, int]]:
        """``(occupant, row)`` where the step from the previous row exceeds one minute."""
        out = []
        if len(self) < 2:
            return out
        step = np.diff(self.timestamps).astype(np.int64)
        same = self.occupants[1:] == self.occupants[:-1]
        for i in np.flatnonzero(same & (step > 1)):
            out.append((str(self.occupants[i + 1]), int(i + 1)))
        return out

    def records(self) -> Iterator[OccupantRecord]:
        for i in range(len(self)):
            w = [_nan_to_none(float(v)) for v in self.weather[i]]
            rank = self.rank[i]
            yield OccupantRecord(
                timestamp=self.timestamps[i].astype(dt.datetime),
                occupant_id=str(self.occupants[i]),
                status={r: _nan_to_none(_int_or_nan(self.status[i, r.index])) for r in RESOURCES},
                usage_today={r: _nan_to_none(float(self.usage[i, r.index])) for r in RESOURCES},
                baseline={r: _nan_to_none(float(self.baseline[i, r.index])) for r in RESOURCES},
                points_game=float(self.points_game[i]),
                points_survey=float(self.points_survey[i]),
                rank=None if np.isnan(rank) else int(rank),
                portal_visits=int(self.portal_visits[i]),
                **dict(zip(WEATHER_COLUMNS, w)),
            )

    @classmethod
    def from_records(cls, records: Iterable[OccupantRecord]) -> "Dataset":
        cols = _empty_columns()
        for rec in records:
            cols["timestamp"].append(np.datetime64(rec.timestamp, "m"))
            cols["occupant_id"].append(rec.occupant_id)
            for r in RESOURCES:
                cols[f"{r.value}_status"].append(_none_to_nan(rec.status.get(r)))
                cols[f"{r.value}_usage_min"].append(_none_to_nan(rec.usage_today.get(r)))
                cols[f"{r.value}_baseline_min"].append(_none_to_nan(rec.baseline.get(r)))
            cols["points_game"].append(rec.points_game)
            cols["points_survey"].append(rec.points_survey)
            cols["rank"].append(_none_to_nan(rec.rank))
            cols["portal_visits"].append(rec.portal_visits)
            for name in WEATHER_COLUMNS:
                cols[name].append(_none_to_nan(getattr(rec, name)))
        ds = _from_columns(cols)
        validate(ds)
        return _grouped(ds)


def _int_or_nan(v):
    return float("nan") if np.isnan(v) else int(v)


def _none_to_nan(v):
    return float("nan") if v is None else float(v)


def _empty_columns() -> dict[str, list]:
    return {name: [] for name in CSV_COLUMNS}


def _from_columns(cols) -> Dataset:
    n = len(cols["timestamp"])

    def stack(names):
        return np.array([cols[c] for c in names], dtype=float).T.reshape(n, len(names))

    return Dataset(
        timestamps=np.array(cols["timestamp"], dtype="datetime64[m]"),
        occupants=np.array(cols["occupant_id"], dtype=object),
        status=stack(STATUS_COLUMNS),
        usage=stack(USAGE_COLUMNS),
        baseline=stack(BASELINE_COLUMNS),
        points_game=np.array(cols["points_game"], dtype=float),
        points_survey=np.array(cols["points_survey"], dtype=float),
        rank=np.array(cols["rank"], dtype=float),
        portal_visits=np.array(cols["portal_visits"], dtype=np.int64),
        weather=stack(WEATHER_COLUMNS),
    )


def _grouped(ds: Dataset) -> Dataset:
    """Stable regroup by occupant in first-appearance order."""
    order = {occ: i for i, occ in enumerate(ds.occupant_ids)}
    key = np.array([order[o] for o in ds.occupants], dtype=np.int64)
    idx = np.argsort(key, kind="stable")
    if np.array_equal(idx, np.arange(len(idx))):
        return ds
    return ds.take(idx)


def concat(datasets: Sequence[Dataset]) -> Dataset:
    fields_ = Dataset.__dataclass_fields__
    parts = {f: np.concatenate([getattr(d, f) for d in datasets]) for f in fields_}
    return _grouped(Dataset(**parts))


def validate(ds: Dataset) -> None:
    """Check row invariants; raise on the first violation (0-based row index)."""
    for j, name in enumerate(STATUS_COLUMNS):
        col = ds.status[:, j]
        bad = ~np.isnan(col) & (col != 0) & (col != 1)
        if bad.any():
            raise BadValue(int(np.argmax(bad)), name, "status must be 0 or 1")
    for j, name in enumerate(USAGE_COLUMNS):
        bad = ds.usage[:, j] < 0
        if bad.any():
            raise BadValue(int(np.argmax(bad)), name, "usage must be >= 0")
    for j, name in enumerate(BASELINE_COLUMNS):
        bad = ds.baseline[:, j] <= 0
        if bad.any():
            raise BadValue(int(np.argmax(bad)), name, "baseline must be > 0")
    hum = ds.weather[:, WEATHER_COLUMNS.index("ext_humidity_pct")]
    bad = (hum < 0) | (hum > 100)
    if bad.any():
        raise BadValue(int(np.argmax(bad)), "ext_humidity_pct", "humidity outside [0, 100]")
    bad = ~np.isnan(ds.rank) & ((ds.rank < 1) | (ds.rank != np.round(ds.rank)))
    if bad.any():
        raise BadValue(int(np.argmax(bad)), "rank", "rank must be a positive integer")
    if (ds.portal_visits < 0).any():
        raise BadValue(int(np.argmax(ds.portal_visits < 0)), "portal_visits", "negative count")

    minute_of_day = (ds.timestamps - ds.timestamps.astype("datetime64[D]")).astype(np.int64)
    over = ds.usage > (minute_of_day[:, None] + 1)
    if over.any():
        row, col = np.argwhere(over)[0]
        raise BadValue(int(row), USAGE_COLUMNS[col], "usage exceeds minutes elapsed since midnight")

    if len(ds) < 2:
        return
    # consecutive rows of the same occupant, in file order
    key = np.unique(ds.occupants, return_inverse=True)[1]
    order = np.argsort(key, kind="stable")
    cur, prev = order[1:], order[:-1]
    same = key[cur] == key[prev]
    ts = ds.timestamps.astype(np.int64)
    bad = same & (ts[cur] <= ts[prev])
    first_bad = int(cur[bad].min()) if bad.any() else None
    days = ts // MINUTES_PER_DAY
    dec = same[:, None] & (days[cur] == days[prev])[:, None] & (ds.usage[cur] < ds.usage[prev])
    dec_rows = cur[dec.any(axis=1)]
    first_dec = int(dec_rows.min()) if len(dec_rows) else None
    if first_bad is not None and (first_dec is None or first_bad <= first_dec):
        raise NonMonotonicTimestamp(str(ds.occupants[first_bad]), first_bad)
    if first_dec is not None:
        k = int(np.flatnonzero(cur == first_dec)[0])
        col = int(np.argmax(dec[k]))
        raise BadValue(first_dec, USAGE_COLUMNS[col], "usage decreased within a day")


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return ""
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _parse_float(text, row, column, required=False):
    text = text.strip()
    if text == "":
        if required:
            raise BadValue(row, column, "required value is empty")
        return float("nan")
    try:
        v = float(text)
    except ValueError:
        raise BadValue(row, column, f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise BadValue(row, column, "non-finite value")
    return v


def read_dataset(source) -> Dataset:
    """Parse a dataset CSV from a path or a text stream."""
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return read_dataset(fh)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyFile("file is empty") from None
    header = [h.strip() for h in header]
    pos = {name: i for i, name in enumerate(header)}
    for name in CSV_COLUMNS:
        if name not in pos:
            raise MissingColumn(name)
    cols = _empty_columns()
    for row_idx, row in enumerate(reader):
        if not row:
            continue
        if len(row) < len(header):
            raise BadValue(row_idx, header[len(row)], "row has too few fields")
        ts_text = row[pos["timestamp"]].strip()
        try:
            ts = dt.datetime.strptime(ts_text, TIMESTAMP_FORMAT)
        except ValueError:
            raise BadValue(row_idx, "timestamp", f"expected YYYY-MM-DDTHH:MM, got {ts_text!r}") from None
        occ = row[pos["occupant_id"]].strip()
        if not occ:
            raise BadValue(row_idx, "occupant_id", "empty occupant id")
        cols["timestamp"].append(np.datetime64(ts, "m"))
        cols["occupant_id"].append(occ)
        for name in CSV_COLUMNS[2:]:
            required = name in ("points_game", "points_survey", "portal_visits")
            cols[name].append(_parse_float(row[pos[name]], row_idx, name, required))
        pv = cols["portal_visits"][-1]
        if pv != int(pv):
            raise BadValue(row_idx, "portal_visits", "count must be an integer")
    if not cols["timestamp"]:
        raise EmptyFile("no data rows")
    ds = _from_columns(cols)
    validate(ds)
    return _grouped(ds)


parse_dataset = read_dataset


def dataset_rows(ds: Dataset) -> Iterator[list[str]]:
    ts_text = np.datetime_as_string(ds.timestamps, unit="m")
    for i in range(len(ds)):
        yield (
            [str(ts_text[i]), str(ds.occupants[i])]
            + [_fmt(v) for v in ds.status[i]]
            + [_fmt(v) for v in ds.usage[i]]
            + [_fmt(v) for v in ds.baseline[i]]
            + [_fmt(ds.points_game[i]), _fmt(ds.points_survey[i]), _fmt(ds.rank[i]), str(int(ds.portal_visits[i]))]
            + [_fmt(v) for v in ds.weather[i]]
        )


def write_dataset(ds: Dataset, target, extra_columns: dict[str, np.ndarray] | None = None) -> None:
    """Write the canonical CSV form.  ``extra_columns`` are appended verbatim."""
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="", encoding="utf-8") as fh:
            return write_dataset(ds, fh, extra_columns)
    extra = extra_columns or {}
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(list(CSV_COLUMNS) + list(extra))
    extra_vals = [np.asarray(v) for v in extra.values()]
    for i, row in enumerate(dataset_rows(ds)):
        writer.writerow(row + [_fmt(v[i]) for v in extra_vals])


def dataset_to_csv_text(ds: Dataset) -> str:
    buf = io.StringIO()
    write_dataset(ds, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# calendar
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalendarRange:
    name: str
    start: dt.date
    end: dt.date

    def contains(self, day: dt.date) -> bool:
        return self.start <= day <= self.end


def read_calendar(source) -> list[CalendarRange]:
    """Read ``name,start_date,end_date`` lines (ISO dates, inclusive ranges)."""
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return read_calendar(fh)
    out = []
    for i, row in enumerate(csv.reader(source)):
        if not row or row[0].strip().startswith("#"):
            continue
        if [c.strip() for c in row] == ["name", "start_date", "end_date"]:
            continue
        if len(row) != 3:
            raise BadValue(i, "calendar", "expected name,start_date,end_date")
        try:
            start = dt.date.fromisoformat(row[1].strip())
            end = dt.date.fromisoformat(row[2].strip())
        except ValueError:
            raise BadValue(i, "calendar", "bad ISO date") from None
        if end < start:
            raise BadValue(i, "calendar", "end before start")
        out.append(CalendarRange(row[0].strip(), start, end))
    return out


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in text.strip().lower()).strip("_")


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Memoryless:
    feature: str = "ext_humidity_pct"
    threshold: float = 70.0


@dataclass(frozen=True)
class MarkovOrder2:
    persistence: float = 0.95


@dataclass(frozen=True)
class WeatherOnly:
    """Target on iff ``ext_temp_c + 0.2 * (ext_humidity_pct - 70) > threshold``."""

    threshold: float = 29.0


@dataclass(frozen=True)
class SynthConfig:
    occupants: int = 2
    days: int = 7
    planted_signal: Memoryless | MarkovOrder2 | WeatherOnly = field(default_factory=Memoryless)
    noise_flip_prob: float = 0.0
    seed: int = 0
    start: dt.date = dt.date(2018, 2, 19)
    target: ResourceKind = ResourceKind.CEILING_FAN
    air_con: bool = True
    booster: float = 100.0

    def check(self) -> None:
        if self.occupants < 1 or self.days < 1:
            raise InvalidConfig("occupants and days must be >= 1")
        if not 0.0 <= self.noise_flip_prob < 0.5:
            raise InvalidConfig("noise_flip_prob must lie in [0, 0.5)")
        sig = self.planted_signal
        if isinstance(sig, Memoryless) and sig.feature not in WEATHER_COLUMNS:
            raise InvalidConfig(f"memoryless feature must be a weather column, got {sig.feature!r}")
        if isinstance(sig, MarkovOrder2) and not 0.0 <= sig.persistence <= 1.0:
            raise InvalidConfig("persistence must lie in [0, 1]")
        if not isinstance(sig, (Memoryless, MarkovOrder2, WeatherOnly)):
            raise InvalidConfig(f"unknown planted signal {sig!r}")
        if not self.air_con and self.target is ResourceKind.AIR_CON:
            raise InvalidConfig("target resource is not installed")


def _ar1(rng, n, phi, scale):
    eps = rng.normal(0.0, scale, n)
    out = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc = phi * acc + eps[i]
        out[i] = acc
    return out


def _campus_weather(rng, n_days):
    n = n_days * MINUTES_PER_DAY
    m = np.arange(n) % MINUTES_PER_DAY
    phase = 2 * np.pi * (m - 9 * 60) / MINUTES_PER_DAY
    day_shift = np.repeat(rng.normal(0.0, 1.0, n_days), MINUTES_PER_DAY)
    temp = 28.0 + 3.0 * np.sin(phase) + day_shift + _ar1(rng, n, 0.995, 0.05)
    hum = 75.0 - 12.0 * np.sin(phase) - 3.0 * day_shift + _ar1(rng, n, 0.995, 0.2)
    hum = np.clip(hum, 0.0, 100.0)
    solar = 800.0 * np.sin(np.pi * (m - 7 * 60) / (12 * 60))
    solar = np.clip(solar + rng.normal(0.0, 20.0, n), 0.0, None)
    solar[(m < 7 * 60) | (m >= 19 * 60)] = 0.0
    return temp, hum, solar


def _habit_chain(rng, hours, on_hours, p_on, p_off):
    """Two-state chain that mostly switches on during ``on_hours``."""
    n = len(hours)
    u = rng.random(n)
    out = np.zeros(n)
    s = 0.0
    active = np.isin(hours, on_hours)
    for i in range(n):
        if s == 0.0:
            if u[i] < (p_on if active[i] else p_on * 0.05):
                s = 1.0
        elif u[i] < (p_off if active[i] else p_off * 8):
            s = 0.0
        out[i] = s
    return out


def synth_generate(config: SynthConfig) -> Dataset:
    """Deterministic synthetic campus with a planted rule on the target resource."""
    config.check()
    n_days = config.days
    n = n_days * MINUTES_PER_DAY
    weather_rng = np.random.default_rng(derive_seed(config.seed, "weather"))
    temp, hum, solar = _campus_weather(weather_rng, n_days)
    t0 = np.datetime64(config.start, "m")
    stamps = t0 + np.arange(n).astype("timedelta64[m]")
    days = np.arange(n) // MINUTES_PER_DAY
    minute = np.arange(n) % MINUTES_PER_DAY
    hours = minute // 60
    weekday = (np.datetime64(config.start, "D") + np.arange(n_days)).astype("datetime64[D]")
    is_weekend_day = ((weekday.astype(np.int64) + 3) % 7) >= 5

    occ_ids = [f"occ{k + 1:02d}" for k in range(config.occupants)]
    per_occ = []
    daily_usage = np.zeros((config.occupants, n_days, 4))
    for k, occ in enumerate(occ_ids):
        rng = np.random.default_rng(derive_seed(config.seed, f"occupant/{occ}"))
        status = np.zeros((n, 4))
        status[:, 0] = _habit_chain(rng, hours, list(range(18, 24)) + [7, 8], 0.02, 0.01)
        status[:, 1] = _habit_chain(rng, hours, list(range(19, 24)), 0.01, 0.02)
        status[:, 2] = _habit_chain(rng, hours, list(range(12, 24)), 0.02, 0.01)
        status[:, 3] = _habit_chain(rng, hours, [22, 23, 0, 1, 2, 3, 4, 5], 0.02, 0.005)
        target = config.target.index
        sig = config.planted_signal
        if isinstance(sig, Memoryless):
            src = {"ext_temp_c": temp, "ext_humidity_pct": hum, "ext_solar_wm2": solar}
            if sig.feature in src:
                drive = src[sig.feature]
            else:
                drive = None  # room readings are generated below
            planted = None if drive is None else (drive > sig.threshold).astype(float)
        elif isinstance(sig, WeatherOnly):
            planted = (temp + 0.2 * (hum - 70.0) > sig.threshold).astype(float)
        else:
            planted = np.empty(n)
            planted[:2] = rng.integers(0, 2, 2)
            keep = rng.random(n) < sig.persistence
            for i in range(2, n):
                planted[i] = planted[i - 2] if keep[i] else 1.0 - planted[i - 2]
        room_temp = temp - 1.0 + 0.5 * rng.normal() + _ar1(rng, n, 0.99, 0.03)
        room_hum = np.clip(hum - 8.0 + _ar1(rng, n, 0.99, 0.1), 0.0, 100.0)
        if planted is None:
            drive = room_temp if sig.feature == "room_temp_c" else room_hum
            planted = (drive > sig.threshold).astype(float)
        flips = rng.random(n) < config.noise_flip_prob
        status[:, target] = np.where(flips, 1.0 - planted, planted)
        if not config.air_con:
            status[:, 3] = np.nan
        usage = np.zeros_like(status)
        for d in range(n_days):
            sl = slice(d * MINUTES_PER_DAY, (d + 1) * MINUTES_PER_DAY)
            usage[sl] = np.cumsum(status[sl], axis=0)
            daily_usage[k, d] = usage[sl][-1]
        visits = np.zeros(n)
        survey = np.zeros(n)
        v_events = rng.random(n) < 0.002
        s_events = rng.random(n) < 0.0005
        for d in range(n_days):
            sl = slice(d * MINUTES_PER_DAY, (d + 1) * MINUTES_PER_DAY)
            visits[sl] = np.cumsum(v_events[sl])
        survey = np.cumsum(s_events) * 5.0
        per_occ.append(dict(status=status, usage=usage, visits=visits, survey=survey,
                            room_temp=room_temp, room_hum=room_hum))

    # fixed synthetic baselines; game points accrue at midnight from the previous day
    base_wd = np.array([420.0, 300.0, 600.0, 400.0])
    base_we = np.array([450.0, 350.0, 700.0, 450.0])
    points = np.zeros((config.occupants, n_days))
    for d in range(1, n_days):
        b = base_we if is_weekend_day[d - 1] else base_wd
        u = np.nan_to_num(daily_usage[:, d - 1])
        mask = np.isfinite(daily_usage[0, d - 1])
        contrib = (config.booster * (b - u) / b) * mask
        points[:, d] = points[:, d - 1] + contrib.sum(axis=1)
    ranks = np.zeros_like(points)
    for d in range(n_days):
        order = sorted(range(config.occupants), key=lambda k: (-points[k, d], occ_ids[k]))
        for r, k in enumerate(order):
            ranks[k, d] = r + 1

    parts = []
    for k, occ in enumerate(occ_ids):
        o = per_occ[k]
        baseline = np.where(is_weekend_day[days][:, None], base_we, base_wd)
        if not config.air_con:
            baseline = baseline.copy()
            baseline[:, 3] = np.nan
        weather = np.column_stack([temp, hum, solar, o["room_temp"], o["room_hum"]])
        parts.append(Dataset(
            timestamps=stamps.copy(),
            occupants=np.full(n, occ, dtype=object),
            status=o["status"],
            usage=o["usage"],
            baseline=baseline,
            points_game=points[k, days],
            points_survey=o["survey"],
            rank=ranks[k, days],
            portal_visits=o["visits"].astype(np.int64),
            weather=np.round(weather, 6),
        ))
    return concat(parts)


def from_daily_usage(usage_by_day: dict, start: dt.date, occupant: str = "occ01",
                     minutes_per_day: int = MINUTES_PER_DAY) -> Dataset:
    """Build a dataset whose resource ``r`` is on for the first ``u`` minutes of each day.

    ``usage_by_day`` maps a resource to a list of daily minutes; absent
    resources are left uninstalled.  Weather is a flat placeholder.
    """
    lengths = {len(v) for v in usage_by_day.values()}
    if len(lengths) != 1:
        raise InvalidConfig("every resource needs the same number of days")
    n_days = lengths.pop()
    n = n_days * minutes_per_day
    t0 = np.datetime64(start, "m")
    day_starts = t0 + (np.arange(n_days) * MINUTES_PER_DAY).astype("timedelta64[m]")
    stamps = (day_starts[:, None] + np.arange(minutes_per_day).astype("timedelta64[m]")).ravel()
    status = np.full((n, 4), np.nan)
    usage = np.full((n, 4), np.nan)
    minute = np.tile(np.arange(minutes_per_day), n_days)
    for r, per_day in usage_by_day.items():
        u = np.repeat(np.asarray(per_day, dtype=float), minutes_per_day)
        status[:, r.index] = (minute < u).astype(float)
        usage[:, r.index] = np.minimum(minute + 1, u)
    weather = np.tile([28.0, 70.0, 0.0, 27.0, 60.0], (n, 1))
    ds = Dataset(
        timestamps=stamps,
        occupants=np.full(n, occupant, dtype=object),
        status=status,
        usage=usage,
        baseline=np.full((n, 4), np.nan),
        points_game=np.zeros(n),
        points_survey=np.zeros(n),
        rank=np.ones(n),
        portal_visits=np.zeros(n, dtype=np.int64),
        weather=weather,
    )
    validate(ds)
    return ds


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------

class FeatureKind(enum.Enum):
    RAW = "raw"
    COLLEGE_DUMMY = "college_dummy"
    SEASONAL_DUMMY = "seasonal_dummy"
    POOLED_CONTINUOUS = "pooled_continuous"


@dataclass(frozen=True)
class FeatureDescriptor:
    name: str
    kind: FeatureKind
    sensor_derived: bool


class Scenario(enum.Enum):
    STEP_AHEAD = "step-ahead"
    SENSOR_FREE = "sensor-free"

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        key = text.strip().lower().replace("_", "-")
        for s in cls:
            if key in (s.value, s.name.lower().replace("_", "-")):
                return s
        raise ValueError(f"unknown scenario {text!r}")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    descriptors: tuple[FeatureDescriptor, ...]
    X: np.ndarray
    labels: dict            # ResourceKind -> int8 vector
    timestamps: np.ndarray
    occupants: np.ndarray

    def __post_init__(self):
        names = [d.name for d in self.descriptors]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        if self.X.shape != (len(self.timestamps), len(names)):
            raise ValueError(f"matrix shape {self.X.shape} does not match {len(names)} descriptors")
        if np.isnan(self.X).any():
            raise ValueError("feature matrix contains NaN")

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.descriptors]

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.names.index(name)]

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        pos = [self.names.index(n) for n in names]
        return FeatureMatrix(tuple(self.descriptors[p] for p in pos), self.X[:, pos],
                             self.labels, self.timestamps, self.occupants)

    def take(self, index) -> "FeatureMatrix":
        return FeatureMatrix(self.descriptors, self.X[index],
                             {r: y[index] for r, y in self.labels.items()},
                             self.timestamps[index], self.occupants[index])

    def with_X(self, X: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(self.descriptors, X, self.labels, self.timestamps, self.occupants)

    def between(self, start: dt.date, end: dt.date) -> "FeatureMatrix":
        days = self.timestamps.astype("datetime64[D]")
        return self.take((days >= np.datetime64(start, "D")) & (days <= np.datetime64(end, "D")))


def day_so_far(status: np.ndarray, day_key: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Switch count and percent-on through each row (inclusive), reset when ``day_key`` changes."""
    status = np.asarray(status, dtype=float)
    n = len(status)
    switches = np.zeros(n)
    pct = np.zeros(n)
    if n == 0:
        return switches, pct
    new_day = np.ones(n, dtype=bool)
    new_day[1:] = day_key[1:] != day_key[:-1]
    starts = np.flatnonzero(new_day)
    change = np.zeros(n)
    change[1:] = (status[1:] != status[:-1]) & ~new_day[1:]
    seg = np.cumsum(new_day) - 1
    csum_change = np.cumsum(change)
    csum_on = np.cumsum(status)
    base_change = csum_change[starts] - change[starts]
    base_on = csum_on[starts] - status[starts]
    count = np.arange(n) - starts[seg] + 1
    switches = csum_change - base_change[seg]
    pct = 100.0 * (csum_on - base_on[seg]) / count
    return switches, pct


def _ffill_limited(values: np.ndarray, minutes: np.ndarray, group: np.ndarray, limit: int) -> np.ndarray:
    """Forward-fill NaNs from the last valid value of the same group at most ``limit`` minutes back."""
    out = values.copy()
    valid = ~np.isnan(values)
    idx = np.where(valid, np.arange(len(values)), -1)
    last = np.maximum.accumulate(idx)
    fill = ~valid & (last >= 0)
    src = last[fill]
    ok = (group[src] == group[fill]) & (minutes[fill] - minutes[src] <= limit)
    pos = np.flatnonzero(fill)[ok]
    out[pos] = values[last[pos]]
    return out


def pool_features(ds: Dataset, calendar: Sequence[CalendarRange] = ()) -> FeatureMatrix:
    """Raw, calendar, seasonal and pooled day-so-far features; one row per valid minute.

    Status-derived columns at a row summarise the occupant's day *before*
    that minute, so the current status is only ever a label.
    """
    n = len(ds)
    if n == 0:
        raise EmptyDataset("cannot build features from an empty dataset")
    minutes = ds.timestamps.astype(np.int64)
    group = np.unique(ds.occupants, return_inverse=True)[1]
    day = ds.timestamps.astype("datetime64[D]")
    day_i = day.astype(np.int64)
    day_key = group * 10_000_000 + day_i
    prev_same_day = np.zeros(n, dtype=bool)
    prev_contig = np.zeros(n, dtype=bool)
    prev_same_day[1:] = day_key[1:] == day_key[:-1]
    prev_contig[1:] = (group[1:] == group[:-1]) & (np.diff(minutes) == 1)

    installed = [r for r in RESOURCES if ds.installed(r)]
    valid = np.ones(n, dtype=bool)
    cols: list[tuple[FeatureDescriptor, np.ndarray]] = []

    for j, name in enumerate(WEATHER_COLUMNS):
        raw = ds.weather[:, j]
        if np.isnan(raw).all():
            continue
        filled = _ffill_limited(raw, minutes, group, FFILL_LIMIT_MIN)
        valid &= ~np.isnan(filled)
        cols.append((FeatureDescriptor(name, FeatureKind.RAW, name in SENSOR_WEATHER), filled))

    status_filled = {}
    for r in installed:
        s = _ffill_limited(ds.status[:, r.index], minutes, group, FFILL_LIMIT_MIN)
        valid &= ~np.isnan(s)
        status_filled[r] = np.nan_to_num(s)

    rank = ds.rank.copy()
    if np.isnan(rank).all():
        rank[:] = 0.0
    else:
        rank = _ffill_limited(rank, minutes, group, np.iinfo(np.int64).max)
        rank = np.nan_to_num(rank, nan=0.0)
    cols.append((FeatureDescriptor("points_game", FeatureKind.RAW, True), ds.points_game.astype(float)))
    cols.append((FeatureDescriptor("points_survey", FeatureKind.RAW, False), ds.points_survey.astype(float)))
    cols.append((FeatureDescriptor("rank", FeatureKind.RAW, True), rank))
    cols.append((FeatureDescriptor("portal_visits", FeatureKind.RAW, False), ds.portal_visits.astype(float)))

    for r in installed:
        s = status_filled[r]
        prev = np.zeros(n)
        prev[1:] = s[:-1]
        prev[~prev_contig] = 0.0
        usage_raw = ds.usage[:, r.index]
        if np.isnan(usage_raw).any():
            usage_raw = np.zeros(n)
            for_sum = s
            csum = np.cumsum(for_sum)
            starts = np.flatnonzero(~prev_same_day)
            seg = np.cumsum(~prev_same_day) - 1
            usage_raw = csum - (csum[starts] - for_sum[starts])[seg]
        usage_prev = np.zeros(n)
        usage_prev[1:] = usage_raw[:-1]
        usage_prev[~prev_same_day] = 0.0
        switches, pct = day_so_far(s, day_key)
        sw_prev = np.zeros(n)
        pct_prev = np.zeros(n)
        sw_prev[1:] = switches[:-1]
        pct_prev[1:] = pct[:-1]
        sw_prev[~prev_same_day] = 0.0
        pct_prev[~prev_same_day] = 0.0
        cols.append((FeatureDescriptor(f"{r.short}_prev_status", FeatureKind.RAW, True), prev))
        cols.append((FeatureDescriptor(f"{r.short}_usage_min", FeatureKind.RAW, True), usage_prev))
        cols.append((FeatureDescriptor(f"{r.short}_switches", FeatureKind.POOLED_CONTINUOUS, True), sw_prev))
        cols.append((FeatureDescriptor(f"{r.short}_pct_usage", FeatureKind.POOLED_CONTINUOUS, True), pct_prev))

    names = sorted({c.name for c in calendar})
    py_days = day.astype(dt.date)
    unique_days = np.unique(day)
    for name in names:
        ranges = [c for c in calendar if c.name == name]
        hit_days = {d for d in unique_days.astype(dt.date) if any(c.contains(d) for c in ranges)}
        flag = np.fromiter((d in hit_days for d in py_days), dtype=float, count=n) if hit_days else np.zeros(n)
        cols.append((FeatureDescriptor(f"college_{_slug(name)}", FeatureKind.COLLEGE_DUMMY, False), flag))

    hour = ((minutes - day_i * MINUTES_PER_DAY) // 60)
    morning = ((hour >= MORNING_START_H) & (hour < MORNING_END_H)).astype(float)
    weekend = (((day_i + 3) % 7) >= 5).astype(float)
    cols.append((FeatureDescriptor("morning", FeatureKind.SEASONAL_DUMMY, False), morning))
    cols.append((FeatureDescriptor("evening", FeatureKind.SEASONAL_DUMMY, False), 1.0 - morning))
    cols.append((FeatureDescriptor("weekday", FeatureKind.SEASONAL_DUMMY, False), 1.0 - weekend))
    cols.append((FeatureDescriptor("weekend", FeatureKind.SEASONAL_DUMMY, False), weekend))

    X = np.column_stack([c[1] for c in cols])[valid]
    labels = {r: status_filled[r][valid].astype(np.int8) for r in installed}
    return FeatureMatrix(tuple(c[0] for c in cols), X, labels,
                         ds.timestamps[valid], ds.occupants[valid])


def scenario_filter(fm: FeatureMatrix, scenario: Scenario) -> FeatureMatrix:
    if scenario is Scenario.STEP_AHEAD:
        return fm
    keep = [d.name for d in fm.descriptors if not d.sensor_derived]
    if not keep:
        raise NoFeaturesLeft("the sensor-free scenario removes every feature")
    return fm.select(keep)


def write_feature_matrix(fm: FeatureMatrix, target) -> None:
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="", encoding="utf-8") as fh:
            return write_feature_matrix(fm, fh)
    writer = csv.writer(target, lineterminator="\n")
    label_res = [r for r in RESOURCES if r in fm.labels]
    writer.writerow(["timestamp", "occupant_id"] + fm.names + [f"label_{r.value}" for r in label_res])
    ts = np.datetime_as_string(fm.timestamps, unit="m")
    for i in range(fm.n_rows):
        writer.writerow([ts[i], fm.occupants[i]] + [_fmt(v) for v in fm.X[i]]
                        + [str(int(fm.labels[r][i])) for r in label_res])


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WindowedTensor:
    """Sliding windows over a feature array, stored as window end indices."""

    features: np.ndarray    # (rows, d)
    row_labels: np.ndarray  # (rows,)
    ends: np.ndarray        # last row of each window
    window_len: int
    stride: int = 1
    row_groups: np.ndarray | None = None  # integer occupant code per row

    def __len__(self) -> int:
        return len(self.ends)

    def window_groups(self) -> np.ndarray:
        if self.row_groups is None:
            return np.zeros(len(self.ends), dtype=np.int64)
        return self.row_groups[self.ends]

    @property
    def labels(self) -> np.ndarray:
        return self.row_labels[self.ends]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def window(self, i: int) -> np.ndarray:
        e = self.ends[i]
        return self.features[e - self.window_len + 1:e + 1]

    def batch(self, index) -> np.ndarray:
        """Stack selected windows into ``(b, N, d)``."""
        ends = self.ends[index]
        offs = np.arange(-self.window_len + 1, 1)
        return self.features[ends[:, None] + offs[None, :]]

    def subset(self, index) -> "WindowedTensor":
        return WindowedTensor(self.features, self.row_labels, self.ends[index], self.window_len, self.stride,
                              self.row_groups)


def make_windows(fm: FeatureMatrix, resource: ResourceKind, window_len: int, stride: int = 1) -> WindowedTensor:
    if window_len < 1 or stride < 1:
        raise ValueError("window length and stride must be >= 1")
    n = fm.n_rows
    if window_len > n:
        raise WindowTooLong(f"window of {window_len} rows exceeds the {n} available")
    if resource not in fm.labels:
        raise KeyError(f"no labels for {resource.value}")
    minutes = fm.timestamps.astype(np.int64)
    brk = np.ones(n, dtype=bool)
    brk[1:] = (fm.occupants[1:] != fm.occupants[:-1]) | (np.diff(minutes) != 1)
    starts = np.flatnonzero(brk)
    stops = np.append(starts[1:], n)
    ends = [np.arange(s + window_len - 1, e, stride) for s, e in zip(starts, stops)]
    ends = np.concatenate(ends) if ends else np.zeros(0, dtype=np.int64)
    groups = np.cumsum(np.r_[True, fm.occupants[1:] != fm.occupants[:-1]]) - 1
    return WindowedTensor(fm.X, fm.labels[resource].astype(np.int8), ends.astype(np.int64), window_len, stride,
                          groups.astype(np.int64))
