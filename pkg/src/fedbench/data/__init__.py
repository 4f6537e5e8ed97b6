"""Dataset ingestion, preprocessing, windowing, splitting and synthesis."""

from .splits import kfold, split_indices
from .tables import (
    DataError,
    LabeledTable,
    ScalerParams,
    encode_insurance,
    load_insurance,
    preprocess_insurance,
    generate_insurance,
)
from .airquality import (
    ClassThresholds,
    StationSeries,
    classify_pm,
    featurize_stations,
    fit_class_thresholds,
    generate_air_quality,
    interpolate_missing,
    load_air_quality,
    make_windows,
    select_features_airq,
)
from .mno import (
    MNO_COLUMNS,
    aggregate_mno,
    filter_mno,
    load_mno,
    synth_mno,
    synth_mno_records,
    write_mno,
)

__all__ = [
    "DataError",
    "LabeledTable",
    "ScalerParams",
    "ClassThresholds",
    "StationSeries",
    "kfold",
    "split_indices",
    "load_insurance",
    "encode_insurance",
    "preprocess_insurance",
    "generate_insurance",
    "load_air_quality",
    "interpolate_missing",
    "select_features_airq",
    "fit_class_thresholds",
    "classify_pm",
    "featurize_stations",
    "make_windows",
    "generate_air_quality",
    "MNO_COLUMNS",
    "synth_mno",
    "synth_mno_records",
    "filter_mno",
    "aggregate_mno",
    "write_mno",
    "load_mno",
]
