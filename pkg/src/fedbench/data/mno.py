"""Seeded synthetic mobile-network-operator data with the daily-aggregate
schema used by the radio-coverage regression use case.

The raw path materializes individual connection records (per user, day), the
filter keeps only users with enough coverage (at least 20 distinct days and
10 records on each), and aggregation reduces records to one row per user and
day. The daily radius-of-action target is a fixed noisy linear-plus-
interaction function of the aggregated features with a large unobserved
per-user component, calibrated so a plain least-squares fit lands in a low
but clearly positive score regime, with tree ensembles a notch above.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from .tables import DataError, LabeledTable

__all__ = [
    "MNO_COLUMNS",
    "MNO_FEATURES",
    "RawRecords",
    "synth_mno_records",
    "filter_mno",
    "aggregate_mno",
    "synth_mno",
    "write_mno",
    "load_mno",
    "features_mno",
]

MNO_COLUMNS = [
    "user_id", "provider", "date", "calendar_week", "day_of_week", "month", "weekend",
    "wifi_share", "rsrq_mean", "rsrq_var", "rsrp_mean", "rsrp_var",
    "rssnr_mean", "rssnr_var", "rssi_mean", "rssi_var", "radius_m",
]

# model inputs: the connection-quality aggregates of one day
MNO_FEATURES = [
    "wifi_share", "rsrq_mean", "rsrq_var", "rsrp_mean", "rsrp_var",
    "rssnr_mean", "rssnr_var", "rssi_mean", "rssi_var",
]

PROVIDERS = ["A", "B", "C"]
PROVIDER_SHARES = [0.5, 0.3, 0.2]
_START = date(2021, 1, 4)  # a Monday
_SPAN_DAYS = 182


@dataclass
class RawRecords:
    """Per-connection records before aggregation (columns of equal length)."""

    user_id: np.ndarray
    provider: np.ndarray
    day: np.ndarray  # day offset within the six-month window
    rsrq: np.ndarray
    rsrp: np.ndarray
    rssnr: np.ndarray
    rssi: np.ndarray
    wifi: np.ndarray  # 0/1 per record

    @property
    def n(self) -> int:
        return self.user_id.shape[0]


def synth_mno_records(n_users: int, seed: int) -> RawRecords:
    """Draw users, their active days and individual connection records."""
    if n_users < 3:
        raise DataError("need at least 3 users (one per provider, roughly)")
    rng = np.random.default_rng(seed)

    provider = rng.choice(np.array(PROVIDERS, dtype=object), size=n_users, p=PROVIDER_SHARES)
    n_days = np.clip(rng.normal(100.0, 45.0, n_users), 8, _SPAN_DAYS).astype(np.int64)
    sporadic = rng.random(n_users) < 0.07

    # per-user radio baseline; providers differ slightly
    prov_shift = {"A": 0.0, "B": 2.0, "C": -1.5}
    rsrp_base = rng.normal(-95.0, 8.0, n_users) + np.array([prov_shift[p] for p in provider])
    rsrq_base = rng.normal(-11.0, 2.2, n_users)
    rssnr_base = rng.normal(10.0, 3.5, n_users) + 0.2 * (rsrp_base + 95.0)
    rssi_base = rsrp_base + rng.normal(17.0, 1.5, n_users)
    wifi_prob = rng.beta(2.5, 2.0, n_users)
    lam = rng.uniform(5.0, 30.0, n_users)

    users, days, counts = [], [], []
    for u in range(n_users):
        chosen = np.sort(rng.choice(_SPAN_DAYS, size=n_days[u], replace=False))
        if sporadic[u]:
            per_day = 4 + rng.poisson(8.0, size=n_days[u])
        else:
            per_day = 10 + rng.poisson(lam[u], size=n_days[u])
        users.append(np.full(n_days[u], u, dtype=np.int64))
        days.append(chosen.astype(np.int64))
        counts.append(per_day.astype(np.int64))
    user_day_user = np.concatenate(users)
    user_day_day = np.concatenate(days)
    user_day_count = np.concatenate(counts)

    rec_user = np.repeat(user_day_user, user_day_count)
    rec_day = np.repeat(user_day_day, user_day_count)
    n_rec = rec_user.shape[0]

    day_wobble = rng.normal(0.0, 1.8, size=user_day_count.shape[0])
    rec_wobble = np.repeat(day_wobble, user_day_count)

    rsrp = rsrp_base[rec_user] + rec_wobble + rng.normal(0.0, 4.5, n_rec)
    rsrq = rsrq_base[rec_user] + 0.25 * rec_wobble + rng.normal(0.0, 1.6, n_rec)
    rssnr = rssnr_base[rec_user] + 0.4 * rec_wobble + rng.normal(0.0, 3.0, n_rec)
    rssi = rssi_base[rec_user] + rec_wobble + rng.normal(0.0, 3.5, n_rec)
    p_wifi = np.clip(wifi_prob[rec_user] + 0.08 * np.sign(rec_wobble), 0.02, 0.98)
    wifi = (rng.random(n_rec) < p_wifi).astype(np.float64)

    return RawRecords(
        user_id=rec_user,
        provider=provider[rec_user],
        day=rec_day,
        rsrq=rsrq,
        rsrp=rsrp,
        rssnr=rssnr,
        rssi=rssi,
        wifi=wifi,
    )


def filter_mno(records: RawRecords) -> RawRecords:
    """Keep only users with >= 20 distinct days and >= 10 records on each;
    everyone else loses all of their rows."""
    if records.n == 0:
        return records
    pair = records.user_id * np.int64(_SPAN_DAYS) + records.day
    pairs, pair_counts = np.unique(pair, return_counts=True)
    pair_user = pairs // _SPAN_DAYS
    keep_users = []
    for u in np.unique(pair_user):
        mask = pair_user == u
        if mask.sum() >= 20 and pair_counts[mask].min() >= 10:
            keep_users.append(u)
    keep = np.isin(records.user_id, np.array(keep_users, dtype=np.int64))
    return RawRecords(
        user_id=records.user_id[keep],
        provider=records.provider[keep],
        day=records.day[keep],
        rsrq=records.rsrq[keep],
        rsrp=records.rsrp[keep],
        rssnr=records.rssnr[keep],
        rssi=records.rssi[keep],
        wifi=records.wifi[keep],
    )


def aggregate_mno(records: RawRecords) -> dict[str, np.ndarray]:
    """One row per (user, day): wifi share plus mean/variance of each metric.

    Variances use the sample convention (n-1); the filter guarantees every
    aggregated day has at least 10 records.
    """
    if records.n == 0:
        raise DataError("no records to aggregate")
    pair = records.user_id * np.int64(_SPAN_DAYS) + records.day
    order = np.argsort(pair, kind="stable")
    pair_sorted = pair[order]
    boundaries = np.flatnonzero(np.diff(pair_sorted)) + 1
    offsets = np.concatenate([[0], boundaries])
    counts = np.diff(np.concatenate([offsets, [pair_sorted.size]])).astype(np.float64)

    out: dict[str, np.ndarray] = {
        "user_id": records.user_id[order][offsets],
        "provider": records.provider[order][offsets],
        "day": records.day[order][offsets],
        "n_records": counts,
    }
    out["wifi_share"] = np.add.reduceat(records.wifi[order], offsets) / counts
    for name in ("rsrq", "rsrp", "rssnr", "rssi"):
        vals = getattr(records, name)[order]
        s1 = np.add.reduceat(vals, offsets)
        s2 = np.add.reduceat(vals * vals, offsets)
        mean = s1 / counts
        var = (s2 - counts * mean * mean) / (counts - 1.0)
        out[f"{name}_mean"] = mean
        out[f"{name}_var"] = np.maximum(var, 0.0)
    return out


def _radius_target(agg: dict[str, np.ndarray], seed: int) -> np.ndarray:
    """Fixed noisy linear-plus-interaction function of the aggregated row."""
    rng = np.random.default_rng(seed + 424242)
    z_rsrp = (agg["rsrp_mean"] + 95.0) / 8.0
    z_rssnr = (agg["rssnr_mean"] - 10.0) / 4.0
    z_rssi_var = (agg["rssi_var"] - 25.0) / 20.0
    wifi = agg["wifi_share"]
    dow = agg["day"] % 7 + 1  # window starts on a Monday
    weekend = (dow >= 6).astype(np.float64)
    month = np.array(
        [(_START + timedelta(days=int(d))).month for d in agg["day"]], dtype=np.float64
    )

    users = agg["user_id"]
    max_user = int(users.max()) + 1
    user_effect = np.random.default_rng(seed + 777).normal(0.0, 500.0, max_user)

    radius = (
        2900.0
        + 1310.0 * weekend
        - 2300.0 * wifi
        + 520.0 * z_rsrp
        + 300.0 * z_rssi_var
        + 560.0 * z_rsrp * z_rssnr
        + 5200.0 * np.maximum(0.30 - wifi, 0.0)
        + 380.0 * np.sin(2.0 * np.pi * (month - 1.0) / 12.0)
        + user_effect[users]
        + rng.normal(0.0, 2050.0, users.shape[0])
    )
    return np.maximum(radius, 25.0).round(1)


def synth_mno(n_users: int, seed: int) -> LabeledTable:
    """Full pipeline: records -> coverage filter -> daily aggregates -> target."""
    records = filter_mno(synth_mno_records(n_users, seed))
    if records.n == 0:
        raise DataError("all synthetic users were filtered out; raise n_users")
    agg = aggregate_mno(records)
    radius = _radius_target(agg, seed)

    dates = np.array(
        [(_START + timedelta(days=int(d))).isoformat() for d in agg["day"]], dtype=object
    )
    iso = [date.fromisoformat(d).isocalendar() for d in dates]
    dow = np.array([i.weekday for i in iso], dtype=np.float64)
    data = {
        "user_id": np.array([f"u{int(u):05d}" for u in agg["user_id"]], dtype=object),
        "provider": agg["provider"],
        "date": dates,
        "calendar_week": np.array([i.week for i in iso], dtype=np.float64),
        "day_of_week": dow,
        "month": np.array([date.fromisoformat(d).month for d in dates], dtype=np.float64),
        "weekend": (dow >= 6).astype(np.float64),
        "wifi_share": agg["wifi_share"].round(6),
        "rsrq_mean": agg["rsrq_mean"].round(4),
        "rsrq_var": agg["rsrq_var"].round(4),
        "rsrp_mean": agg["rsrp_mean"].round(4),
        "rsrp_var": agg["rsrp_var"].round(4),
        "rssnr_mean": agg["rssnr_mean"].round(4),
        "rssnr_var": agg["rssnr_var"].round(4),
        "rssi_mean": agg["rssi_mean"].round(4),
        "rssi_var": agg["rssi_var"].round(4),
        "radius_m": radius,
    }
    return LabeledTable(columns=list(MNO_COLUMNS), data=data, target="radius_m", key="provider")


def write_mno(table: LabeledTable, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MNO_COLUMNS)
        for i in range(table.n_rows):
            row = []
            for name in MNO_COLUMNS:
                v = table.data[name][i]
                if name in ("user_id", "provider", "date"):
                    row.append(v)
                elif name in ("calendar_week", "day_of_week", "month", "weekend"):
                    row.append(int(v))
                else:
                    row.append(f"{float(v):.6f}")
            writer.writerow(row)


def load_mno(path) -> LabeledTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != MNO_COLUMNS:
            raise DataError(f"{path}: header does not match the daily-aggregate schema")
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no data rows")
    cols = list(zip(*rows))
    data: dict[str, np.ndarray] = {}
    for j, name in enumerate(MNO_COLUMNS):
        if name in ("user_id", "provider", "date"):
            data[name] = np.array(cols[j], dtype=object)
        else:
            try:
                data[name] = np.array(cols[j], dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell in column {name}") from None
    return LabeledTable(columns=list(MNO_COLUMNS), data=data, target="radius_m", key="provider")


def features_mno(table: LabeledTable):
    """(X, y, provider keys) with the nine daily connection-quality features."""
    X = np.column_stack([table.data[name] for name in MNO_FEATURES])
    return X, table.data["radius_m"].copy(), table.data["provider"].copy()
