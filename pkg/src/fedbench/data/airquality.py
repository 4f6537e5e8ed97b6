"""Hourly multi-station air-quality pipeline: loading, linear interpolation,
feature selection, balanced class thresholds, sliding windows, and a seeded
generator that writes schema-compatible station files.

Station files follow the public multi-site header
``No,year,month,day,hour,PM2.5,PM10,SO2,NO2,CO,O3,TEMP,PRES,DEWP,RAIN,wd,WSPM,station``
so real downloads drop in unchanged. The generator produces weather driven by
shared city-wide synoptic processes and particulate levels that respond to
wind, humidity, season and stagnation, which is what makes the windowed
classification task learnable.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .tables import DataError

__all__ = [
    "StationSeries",
    "ClassThresholds",
    "load_air_quality",
    "interpolate_missing",
    "select_features_airq",
    "fit_class_thresholds",
    "classify_pm",
    "featurize_stations",
    "make_windows",
    "generate_air_quality",
]

NUMERIC_COLUMNS = ["PM2.5", "PM10", "SO2", "NO2", "CO", "O3", "TEMP", "PRES", "DEWP", "RAIN", "WSPM"]
REQUIRED_COLUMNS = ["year", "month", "day", "hour"] + NUMERIC_COLUMNS + ["wd"]
DROPPED_FEATURES = ["PM10", "SO2", "NO2", "CO", "O3"]  # near-duplicates of the target
WEATHER_FEATURES = ["TEMP", "PRES", "DEWP", "RAIN", "WSPM"]
WIND_DIRECTIONS = [
    "N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE",
    "S", "SSW", "SW", "WSW", "W", "WNW", "NW", "NNW",
]


@dataclass
class StationSeries:
    """One station's hourly record: numeric columns (NaN = missing) plus the
    categorical wind direction (None = missing)."""

    station: str
    timestamps: np.ndarray  # datetime64[h], strictly increasing, hourly
    numeric: dict[str, np.ndarray]
    wd: np.ndarray  # object array of direction labels / None

    @property
    def n_hours(self) -> int:
        return self.timestamps.shape[0]


@dataclass(frozen=True)
class ClassThresholds:
    """PM2.5 cut points giving three equally filled classes over the data
    they were fitted on: low <= t_low < medium <= t_high < high."""

    t_low: float
    t_high: float

    def __post_init__(self):
        if not self.t_low < self.t_high:
            raise DataError("degenerate thresholds: t_low must be < t_high")


def load_air_quality(directory, expected_stations: list[str] | None = None) -> list[StationSeries]:
    """Load every station CSV in `directory`, one series per station.

    The station name comes from the file's `station` column when present,
    else from the file name. Missing cells stay missing (NaN / None) for the
    interpolation step. Rows are sorted by time and must be hourly-contiguous.
    """
    files = sorted(
        os.path.join(directory, f) for f in os.listdir(directory) if f.lower().endswith(".csv")
    )
    if not files:
        raise DataError(f"no station files in {directory}")
    series = []
    for path in files:
        series.append(_load_station_file(path))
    series.sort(key=lambda s: s.station)
    names = [s.station for s in series]
    if len(set(names)) != len(names):
        raise DataError(f"duplicate station names: {names}")
    if expected_stations is not None:
        missing = sorted(set(expected_stations) - set(names))
        if missing:
            raise DataError(f"absent station files: {missing}")
        series = [s for s in series if s.station in set(expected_stations)]
    return series


def _load_station_file(path) -> StationSeries:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        missing = set(REQUIRED_COLUMNS) - set(header)
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        col = {name: header.index(name) for name in header}
        rows = list(reader)

    n = len(rows)
    if n == 0:
        raise DataError(f"{path}: no data rows")
    numeric = {name: np.full(n, np.nan) for name in NUMERIC_COLUMNS}
    wd = np.full(n, None, dtype=object)
    stamps = np.empty(n, dtype="datetime64[h]")
    station = None
    for i, row in enumerate(rows):
        try:
            stamps[i] = np.datetime64(
                datetime(
                    int(row[col["year"]]), int(row[col["month"]]), int(row[col["day"]]),
                    int(row[col["hour"]]),
                ),
                "h",
            )
        except ValueError:
            raise DataError(f"{path}: row {i + 1} has an invalid timestamp") from None
        for name in NUMERIC_COLUMNS:
            cell = row[col[name]].strip()
            if cell not in ("", "NA", "nan", "NaN"):
                numeric[name][i] = float(cell)
        cell = row[col["wd"]].strip()
        if cell not in ("", "NA"):
            wd[i] = cell
        if "station" in col:
            station = station or row[col["station"]].strip()

    if station is None:
        station = os.path.splitext(os.path.basename(path))[0]
    order = np.argsort(stamps, kind="stable")
    stamps = stamps[order]
    wd = wd[order]
    numeric = {k: v[order] for k, v in numeric.items()}
    steps = np.diff(stamps.astype("int64"))
    if np.any(steps != 1):
        raise DataError(f"{path}: timestamps are not hourly-contiguous")
    return StationSeries(station=station, timestamps=stamps, numeric=numeric, wd=wd)


def interpolate_missing(series: StationSeries) -> StationSeries:
    """Fill numeric gaps by linear interpolation (edges extend the nearest
    value); wind direction gaps copy the nearest earlier/later reading."""
    numeric = {}
    for name, values in series.numeric.items():
        present = np.flatnonzero(~np.isnan(values))
        if present.size == 0:
            raise DataError(f"station {series.station}: column {name} is fully missing")
        filled = np.interp(np.arange(values.size), present, values[present])
        numeric[name] = filled
    wd = series.wd.copy()
    present = np.flatnonzero(wd != None)  # noqa: E711  (object array)
    if present.size == 0:
        raise DataError(f"station {series.station}: wind direction is fully missing")
    prev = present[np.clip(np.searchsorted(present, np.arange(wd.size), side="right") - 1, 0, None)]
    nxt = present[np.clip(np.searchsorted(present, np.arange(wd.size), side="left"), None, present.size - 1)]
    dist_prev = np.abs(np.arange(wd.size) - prev)
    dist_next = np.abs(nxt - np.arange(wd.size))
    pick = np.where(dist_prev <= dist_next, prev, nxt)
    wd = wd[pick]
    return StationSeries(series.station, series.timestamps.copy(), numeric, wd)


def select_features_airq(series: StationSeries) -> StationSeries:
    """Drop the pollutant columns that are near-proxies of the target; keep
    weather features, wind direction, and PM2.5 as the label source only."""
    numeric = {
        name: series.numeric[name].copy()
        for name in WEATHER_FEATURES + ["PM2.5"]
    }
    return StationSeries(series.station, series.timestamps.copy(), numeric, series.wd.copy())


def fit_class_thresholds(pm_values: np.ndarray) -> ClassThresholds:
    """Empirical 1/3 and 2/3 cut points over the full data set."""
    pm = np.asarray(pm_values, dtype=np.float64)
    pm = pm[~np.isnan(pm)]
    if pm.size < 3:
        raise DataError("need at least three PM2.5 values")
    t_low = float(np.quantile(pm, 1.0 / 3.0, method="inverted_cdf"))
    t_high = float(np.quantile(pm, 2.0 / 3.0, method="inverted_cdf"))
    if t_low >= t_high:
        raise DataError("degenerate PM2.5 distribution: thresholds collapsed")
    return ClassThresholds(t_low=t_low, t_high=t_high)


def classify_pm(pm_values: np.ndarray, thresholds: ClassThresholds) -> np.ndarray:
    """0 = low (<= t_low), 1 = medium (<= t_high), 2 = high."""
    pm = np.asarray(pm_values, dtype=np.float64)
    return np.where(pm <= thresholds.t_low, 0, np.where(pm <= thresholds.t_high, 1, 2)).astype(np.int64)


def featurize_stations(
    series_list: list[StationSeries],
    wd_categories: list[str] | None = None,
):
    """Per-station (T, d) feature matrices: weather columns then one-hot wind.

    The direction category set is shared across stations (union, sorted) so
    every client sees the same feature geometry. Returns
    (matrices, pm25_list, feature_names).
    """
    if wd_categories is None:
        cats: set[str] = set()
        for s in series_list:
            cats.update(x for x in s.wd.tolist() if x is not None)
        wd_categories = sorted(cats)
    names = list(WEATHER_FEATURES) + [f"wd_{c}" for c in wd_categories]
    matrices, pm_list = [], []
    for s in series_list:
        cols = [s.numeric[name] for name in WEATHER_FEATURES]
        onehot = np.zeros((s.n_hours, len(wd_categories)))
        for j, c in enumerate(wd_categories):
            onehot[:, j] = s.wd == c
        matrices.append(np.column_stack(cols + [onehot]))
        pm_list.append(s.numeric["PM2.5"].copy())
    return matrices, pm_list, names


def make_windows(
    features: np.ndarray,
    hourly_labels: np.ndarray,
    window: int = 48,
    stride: int = 1,
):
    """Sliding windows over one station; never crosses station boundaries.

    Window i covers hours [i*stride, i*stride + window) and takes the label
    of its final hour. Returns (inputs (m, window, d), labels (m,)).
    """
    T = features.shape[0]
    if T < window:
        raise DataError(f"series of length {T} is shorter than the window ({window})")
    if stride < 1:
        raise DataError("stride must be positive")
    m = (T - window) // stride + 1
    view = np.lib.stride_tricks.sliding_window_view(features, window, axis=0)
    inputs = view[::stride][:m].transpose(0, 2, 1).copy()
    ends = np.arange(m) * stride + window - 1
    return inputs, np.asarray(hourly_labels)[ends].copy()


# --- synthetic station generator ------------------------------------------------

STATIONS_FULL = [
    "Aotizhongxin", "Changping", "Dingling", "Dongsi", "Guanyuan", "Gucheng",
    "Huairou", "Nongzhanguan", "Shunyi", "Tiantan", "Wanliu", "Wanshouxigong",
]


def _ar1(rng, n, rho, sigma):
    out = np.empty(n)
    out[0] = rng.normal(0.0, sigma / np.sqrt(1 - rho * rho))
    eps = rng.normal(0.0, sigma, size=n)
    for t in range(1, n):
        out[t] = rho * out[t - 1] + eps[t]
    return out


def generate_air_quality(
    out_dir,
    stations: list[str] | None = None,
    hours: int = 24 * 365,
    seed: int = 0,
    start: str = "2013-03-01",
    missing_rate: float = 0.015,
) -> list[str]:
    """Write one schema-compatible CSV per station; returns the file paths.

    All stations share city-wide synoptic drivers (plus small local noise),
    mirroring how strongly correlated the real sites are. PM2.5 responds to
    stagnation (low wind), humidity, southerly transport, season and rain
    washout, with an accumulation term that rewards models that look at the
    recent past.
    """
    stations = stations or STATIONS_FULL
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    start_dt = datetime.fromisoformat(start)
    times = [start_dt + timedelta(hours=int(t)) for t in range(hours)]
    doy = np.array([t.timetuple().tm_yday for t in times], dtype=np.float64)
    hod = np.array([t.hour for t in times], dtype=np.float64)
    winter = np.cos(2 * np.pi * (doy - 15.0) / 365.0)
    diurnal = np.sin(2 * np.pi * (hod - 9.0) / 24.0)

    # city-wide drivers shared by all stations
    synoptic = _ar1(rng, hours, 0.985, 0.22)   # pressure-system anomaly
    humidity = _ar1(rng, hours, 0.97, 0.28)    # moisture anomaly
    windbase = np.abs(_ar1(rng, hours, 0.92, 0.55)) + 0.25
    dir_drift = np.cumsum(rng.integers(-2, 3, size=hours))

    rain_event = (humidity > 0.9) & (rng.random(hours) < 0.22)
    rain_amount = np.where(rain_event, rng.exponential(1.1, size=hours), 0.0)

    # stagnation accumulates particulates; wind and rain clear them
    load = np.empty(hours)
    drive = (
        0.95 * winter
        + 1.05 * np.clip(humidity, -1.5, 1.5)
        - 0.80 * (windbase - windbase.mean())
        - 1.6 * rain_event
        + 0.40 * np.sin(2 * np.pi * dir_drift / 16.0)
        - 0.55 * synoptic
    )
    load[0] = drive[0]
    for t in range(1, hours):
        load[t] = 0.88 * load[t - 1] + 0.12 * drive[t] + rng.normal(0.0, 0.05)

    paths = []
    for s_idx, station in enumerate(stations):
        srng = np.random.default_rng(seed * 7919 + 101 + s_idx)
        site_pm = srng.normal(0.0, 0.06)
        site_temp = srng.normal(0.0, 0.7)

        temp = (
            13.5 - 11.5 * winter + 4.5 * diurnal + 2.2 * synoptic + site_temp
            + srng.normal(0.0, 0.5, hours)
        )
        pres = 1012.0 + 9.0 * winter - 0.25 * (temp - 13.5) + 4.0 * synoptic + srng.normal(0.0, 0.6, hours)
        spread = np.clip(8.5 - 6.0 * humidity, 0.8, 18.0)
        dewp = temp - spread + srng.normal(0.0, 0.4, hours)
        wspm = np.clip(windbase * 1.9 + srng.normal(0.0, 0.25, hours), 0.0, None).round(1)
        rain = np.where(rain_amount > 0, (rain_amount + srng.normal(0, 0.08, hours)).clip(0.01, None), 0.0).round(1)

        dir_idx = (dir_drift + srng.integers(-1, 2, size=hours)) % 16
        wd = np.array(WIND_DIRECTIONS, dtype=object)[dir_idx]

        log_pm = 3.55 + 0.98 * load + site_pm + srng.normal(0.0, 0.16, hours)
        pm25 = np.exp(np.clip(log_pm, 0.6, 6.6)).round(1)

        pm10 = (pm25 * srng.uniform(1.15, 1.45, hours) + srng.normal(18.0, 6.0, hours)).clip(2.0, None).round(1)
        so2 = (2.0 + 0.16 * pm25 + 8.0 * np.clip(winter, 0, None) + srng.normal(0, 3.0, hours)).clip(0.3, None).round(1)
        no2 = (12.0 + 0.30 * pm25 + srng.normal(0, 7.0, hours)).clip(1.0, None).round(1)
        co = (300.0 + 9.5 * pm25 + srng.normal(0, 120.0, hours)).clip(100.0, None).round(0)
        o3 = (55.0 + 28.0 * diurnal - 0.18 * pm25 - 18.0 * winter + srng.normal(0, 9.0, hours)).clip(0.2, None).round(1)

        path = os.path.join(out_dir, f"{station}.csv")
        columns = {
            "PM2.5": pm25, "PM10": pm10, "SO2": so2, "NO2": no2, "CO": co, "O3": o3,
            "TEMP": temp.round(1), "PRES": pres.round(1), "DEWP": dewp.round(1),
            "RAIN": rain, "WSPM": wspm,
        }
        missing_mask = {
            name: srng.random(hours) < missing_rate for name in list(columns) + ["wd"]
        }
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["No", "year", "month", "day", "hour", "PM2.5", "PM10", "SO2", "NO2",
                 "CO", "O3", "TEMP", "PRES", "DEWP", "RAIN", "wd", "WSPM", "station"]
            )
            for t in range(hours):
                ts = times[t]
                row = [t + 1, ts.year, ts.month, ts.day, ts.hour]
                for name in ["PM2.5", "PM10", "SO2", "NO2", "CO", "O3", "TEMP", "PRES", "DEWP", "RAIN"]:
                    row.append("NA" if missing_mask[name][t] else columns[name][t])
                row.append("NA" if missing_mask["wd"][t] else wd[t])
                row.append(columns["WSPM"][t])
                row.append(station)
                writer.writerow(row)
        paths.append(path)
    return paths
