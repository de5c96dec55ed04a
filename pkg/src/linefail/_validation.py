"""Small input-validation helpers shared by metrics and estimators."""

from __future__ import annotations

import numpy as np

from .errors import EmptyInput, LengthMismatch, OneClassOnly


def as_score_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    return arr


def as_label_array(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    out = arr.astype(np.int64)
    if not np.isin(out, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return out


def check_aligned(scores: np.ndarray, labels: np.ndarray) -> None:
    if len(scores) != len(labels):
        raise LengthMismatch(f"{len(scores)} scores vs {len(labels)} labels")


def check_nonempty(arr: np.ndarray) -> None:
    if len(arr) == 0:
        raise EmptyInput("need at least one row")


def check_both_classes(labels: np.ndarray) -> None:
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise OneClassOnly("need at least one positive and one negative label")


def as_feature_matrix(X) -> np.ndarray:
    """2-d float64 matrix; NaN encodes a missing cell."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d feature matrix, got ndim={arr.ndim}")
    return arr
