"""Tabular ingestion and preprocessing for the insurance use case, plus the
seeded generator that produces the bundled surrogate data file.

The surrogate mirrors the public medical-insurance table: 1338 rows, columns
``age,sex,bmi,children,smoker,region,charges``, four nearly equally sized
regions, roughly 50/50 sex and ~20% smokers. Charges follow an actuarial-style
mix of a linear age trend, a sharp smoker/body-mass interaction and
heavy-tailed noise, calibrated so the standard model zoo lands in the same
score regime as on the original table.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DataError",
    "LabeledTable",
    "ScalerParams",
    "load_insurance",
    "encode_insurance",
    "preprocess_insurance",
    "generate_insurance",
]

INSURANCE_COLUMNS = ["age", "sex", "bmi", "children", "smoker", "region", "charges"]
REGIONS = ["northeast", "northwest", "southeast", "southwest"]


class DataError(ValueError):
    """Raised for malformed or missing input data."""


@dataclass
class LabeledTable:
    """Rectangular mixed-type table with a target and a partition-key column."""

    columns: list[str]
    data: dict[str, np.ndarray]
    target: str
    key: str | None = None

    @property
    def n_rows(self) -> int:
        return len(self.data[self.columns[0]])


@dataclass
class ScalerParams:
    """Per-feature min/max fitted on the training split only.

    Transform maps the fitted min to 0 and max to 1; out-of-split values may
    leave [0, 1]. Constant columns map to 0.
    """

    mins: np.ndarray
    maxs: np.ndarray
    column_indices: np.ndarray

    @staticmethod
    def fit(X: np.ndarray, column_indices) -> "ScalerParams":
        idx = np.asarray(column_indices, dtype=np.int64)
        return ScalerParams(
            mins=X[:, idx].min(axis=0),
            maxs=X[:, idx].max(axis=0),
            column_indices=idx,
        )

    def transform(self, X: np.ndarray) -> np.ndarray:
        out = X.astype(np.float64).copy()
        span = self.maxs - self.mins
        span = np.where(span == 0.0, 1.0, span)
        out[:, self.column_indices] = (X[:, self.column_indices] - self.mins) / span
        return out


@dataclass
class TargetScaler:
    """Min-max scaling for the regression target, fitted on training rows.

    R-squared is invariant under this affine map, so scores computed in
    scaled space equal raw-space scores; scaling exists purely to keep
    gradient training well-conditioned.
    """

    lo: float
    hi: float

    @staticmethod
    def fit(y: np.ndarray) -> "TargetScaler":
        lo, hi = float(np.min(y)), float(np.max(y))
        if hi == lo:
            hi = lo + 1.0
        return TargetScaler(lo, hi)

    def transform(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.lo) / (self.hi - self.lo)

    def inverse(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=np.float64) * (self.hi - self.lo) + self.lo


def load_insurance(path) -> LabeledTable:
    """Read the insurance CSV; every cell must parse, rows with problems are
    reported by their 1-based data row number."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if set(header) != set(INSURANCE_COLUMNS):
            missing = set(INSURANCE_COLUMNS) - set(header)
            raise DataError(f"{path}: header mismatch, missing columns {sorted(missing)}")
        col = {name: header.index(name) for name in INSURANCE_COLUMNS}
        age, sex, bmi, children, smoker, region, charges = [], [], [], [], [], [], []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(header) or any(cell.strip() == "" for cell in row):
                raise DataError(f"{path}: row {row_no} has missing values")
            try:
                age.append(int(float(row[col["age"]])))
                bmi.append(float(row[col["bmi"]]))
                children.append(int(float(row[col["children"]])))
                charges.append(float(row[col["charges"]]))
            except ValueError:
                raise DataError(f"{path}: row {row_no} has a non-numeric cell") from None
            s = row[col["sex"]].strip().lower()
            sm = row[col["smoker"]].strip().lower()
            if s not in ("male", "female"):
                raise DataError(f"{path}: row {row_no} has unknown sex {s!r}")
            if sm not in ("yes", "no"):
                raise DataError(f"{path}: row {row_no} has unknown smoker flag {sm!r}")
            sex.append(s)
            smoker.append(sm)
            region.append(row[col["region"]].strip().lower())
    data = {
        "age": np.array(age, dtype=np.float64),
        "sex": np.array(sex, dtype=object),
        "bmi": np.array(bmi, dtype=np.float64),
        "children": np.array(children, dtype=np.float64),
        "smoker": np.array(smoker, dtype=object),
        "region": np.array(region, dtype=object),
        "charges": np.array(charges, dtype=np.float64),
    }
    return LabeledTable(columns=list(INSURANCE_COLUMNS), data=data, target="charges", key="region")


def encode_insurance(table: LabeledTable, for_federated: bool):
    """Numeric encoding before scaling.

    Binary sex/smoker map to 0/1. Centralized mode one-hot encodes the
    region into the feature matrix; federated mode leaves the region out of
    the features (it only partitions) and returns it as the key vector.

    Returns (X, y, keys, feature_names, scale_columns) where scale_columns
    are the indices min-max scaling applies to (age, bmi, children).
    """
    n = table.n_rows
    sex = (table.data["sex"] == "male").astype(np.float64)
    smoker = (table.data["smoker"] == "yes").astype(np.float64)
    base = np.column_stack(
        [table.data["age"], sex, table.data["bmi"], table.data["children"], smoker]
    )
    names = ["age", "sex", "bmi", "children", "smoker"]
    scale_columns = [0, 2, 3]
    if for_federated:
        return base, table.data["charges"].copy(), table.data["region"].copy(), names, scale_columns
    regions = sorted(set(table.data["region"].tolist()))
    onehot = np.zeros((n, len(regions)))
    for j, r in enumerate(regions):
        onehot[:, j] = table.data["region"] == r
    X = np.column_stack([base, onehot])
    names = names + [f"region_{r}" for r in regions]
    return X, table.data["charges"].copy(), None, names, scale_columns


def preprocess_insurance(
    table: LabeledTable,
    for_federated: bool,
    train_rows: np.ndarray | None = None,
):
    """Encode and scale; the scalers are fitted on `train_rows` only.

    Returns (X_scaled, y_scaled, keys, scaler, target_scaler). With
    train_rows None the whole table is treated as the training split.
    """
    X, y, keys, _names, scale_cols = encode_insurance(table, for_federated)
    rows = np.arange(table.n_rows) if train_rows is None else np.asarray(train_rows)
    scaler = ScalerParams.fit(X[rows], scale_cols)
    tscaler = TargetScaler.fit(y[rows])
    return scaler.transform(X), tscaler.transform(y), keys, scaler, tscaler


# --- surrogate data generator -------------------------------------------------

_CHILD_PROBS = np.array([0.429, 0.242, 0.179, 0.117, 0.020, 0.013])


def generate_insurance(n_rows: int = 1338, seed: int = 20130301) -> LabeledTable:
    """Seeded surrogate with the reference schema and score regime."""
    rng = np.random.default_rng(seed)
    age = rng.integers(18, 65, size=n_rows).astype(np.float64)
    sex = np.where(rng.random(n_rows) < 0.505, "male", "female").astype(object)
    bmi = np.clip(rng.normal(30.66, 6.1, size=n_rows), 16.0, 53.1).round(3)
    children = rng.choice(np.arange(6), size=n_rows, p=_CHILD_PROBS).astype(np.float64)
    smoker = np.where(rng.random(n_rows) < 0.205, "yes", "no").astype(object)

    # regions as equal as the row count allows, then shuffled
    counts = [n_rows // 4] * 4
    for i in range(n_rows % 4):
        counts[i] += 1
    region = np.repeat(np.array(REGIONS, dtype=object), counts)
    rng.shuffle(region)

    is_smoker = smoker == "yes"
    # sharp body-mass interaction only smokers exhibit; trees pick this up,
    # a linear fit only sees the smoker main effect
    smoker_load = 12200.0 + 19300.0 / (1.0 + np.exp(-(bmi - 30.0) / 0.9))
    base = -2200.0 + 268.0 * age + 520.0 * children + 24.0 * (bmi - 30.0)
    region_shift = {"northeast": 350.0, "northwest": 0.0, "southeast": 450.0, "southwest": 50.0}
    shift = np.array([region_shift[r] for r in region])

    noise = rng.gamma(shape=1.6, scale=1500.0, size=n_rows) - 1.6 * 1500.0
    # a small cloud of unexplained high charges, as in the reference table
    outlier = rng.random(n_rows) < 0.075
    bump = np.where(outlier, rng.uniform(6000.0, 21000.0, size=n_rows), 0.0)

    charges = base + shift + np.where(is_smoker, smoker_load, 0.0) + noise + bump
    charges = np.maximum(charges, 1100.0).round(2)

    data = {
        "age": age,
        "sex": sex,
        "bmi": bmi,
        "children": children,
        "smoker": smoker,
        "region": region,
        "charges": charges,
    }
    return LabeledTable(columns=list(INSURANCE_COLUMNS), data=data, target="charges", key="region")


def write_insurance(table: LabeledTable, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(INSURANCE_COLUMNS)
        for i in range(table.n_rows):
            writer.writerow(
                [
                    int(table.data["age"][i]),
                    table.data["sex"][i],
                    f"{table.data['bmi'][i]:.3f}",
                    int(table.data["children"][i]),
                    table.data["smoker"][i],
                    table.data["region"][i],
                    f"{table.data['charges'][i]:.2f}",
                ]
            )
