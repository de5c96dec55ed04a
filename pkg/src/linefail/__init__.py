"""Streaming rare-event failure prediction for production-line test data.

Two-stage modeling (FTRL-Proximal stacking of hashed categoricals into a
gradient-boosted tree classifier) plus flow/periodicity analytics, an
MCC threshold tuner, and a seeded synthetic data generator.
"""

from .errors import LinefailError
from .explore import (
    PeriodReport,
    StationStats,
    analyze_periodicity,
    autocorrelation,
    detect_periods,
    flow_path,
    flow_path_census,
    line_error_rates,
    record_count_series,
    station_stats,
    time_diff,
)
from .ftrl import FtrlClassifier, FtrlConfig, FtrlModel, featurize, hash_feature, train_stream
from .gbt import (
    BoostedTreesClassifier,
    Ensemble,
    GbtConfig,
    feature_importance,
    grad_hess,
    grow_tree,
    select_top_k,
    split_gain,
)
from .ingest import (
    FeatureId,
    FeatureKind,
    Schema,
    SourceFiles,
    SparseRow,
    assign_fold,
    parse_feature_name,
    read_schema,
    stream_rows,
)
from .metrics import Confusion, LiftRow, auc, confusion, decile_lift, log_loss, mcc
from .pipeline import (
    OofPredictions,
    PipelineConfig,
    PipelineResult,
    StackResult,
    ThresholdReport,
    assemble_features,
    cross_validate_oof,
    run_full_pipeline,
    stack_categorical,
    tune_threshold,
)
from .synth import SynthConfig, bayes_scores, generate

__version__ = "0.1.0"

__all__ = [
    "LinefailError",
    "FeatureId",
    "FeatureKind",
    "Schema",
    "SourceFiles",
    "SparseRow",
    "assign_fold",
    "parse_feature_name",
    "read_schema",
    "stream_rows",
    "StationStats",
    "PeriodReport",
    "analyze_periodicity",
    "autocorrelation",
    "detect_periods",
    "flow_path",
    "flow_path_census",
    "line_error_rates",
    "record_count_series",
    "station_stats",
    "time_diff",
    "FtrlClassifier",
    "FtrlConfig",
    "FtrlModel",
    "featurize",
    "hash_feature",
    "train_stream",
    "BoostedTreesClassifier",
    "Ensemble",
    "GbtConfig",
    "feature_importance",
    "grad_hess",
    "grow_tree",
    "select_top_k",
    "split_gain",
    "Confusion",
    "LiftRow",
    "auc",
    "confusion",
    "decile_lift",
    "log_loss",
    "mcc",
    "OofPredictions",
    "PipelineConfig",
    "PipelineResult",
    "StackResult",
    "ThresholdReport",
    "assemble_features",
    "cross_validate_oof",
    "run_full_pipeline",
    "stack_categorical",
    "tune_threshold",
    "SynthConfig",
    "bayes_scores",
    "generate",
]
