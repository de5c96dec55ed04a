"""Evaluation primitives for imbalanced binary classification.

Log-loss, rank-based AUC (Mann-Whitney with average ranks), confusion
counts, Matthews correlation coefficient, and decile lift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import (
    as_label_array,
    as_score_array,
    check_aligned,
    check_both_classes,
    check_nonempty,
)
from .errors import NoPositives, TooFewRows

PROB_CLIP = 1e-15


def log_loss(probs, labels) -> float:
    """Mean negative Bernoulli log-likelihood, probabilities clipped to
    [1e-15, 1 - 1e-15]."""
    p = as_score_array(probs)
    y = as_label_array(labels)
    check_aligned(p, y)
    check_nonempty(p)
    p = np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their group's average rank."""
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels) -> float:
    """Probability a random positive outranks a random negative, ties 1/2.

    Computed as the Mann-Whitney rank statistic in O(n log n); equal to
    the pairwise comparison count with ties worth half.
    """
    s = as_score_array(scores)
    y = as_label_array(labels)
    check_aligned(s, y)
    check_nonempty(s)
    check_both_classes(y)
    ranks = _average_ranks(s)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    mean_pos_rank = float(ranks[y == 1].mean())
    return (mean_pos_rank - (n_pos + 1) / 2.0) / n_neg


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(scores, labels, threshold: float) -> Confusion:
    """Counts with the inclusive rule: predicted positive iff score >= threshold."""
    s = as_score_array(scores)
    y = as_label_array(labels)
    check_aligned(s, y)
    pred = s >= threshold
    actual = y == 1
    tp = int(np.count_nonzero(pred & actual))
    fp = int(np.count_nonzero(pred & ~actual))
    fn = int(np.count_nonzero(~pred & actual))
    tn = len(y) - tp - fp - fn
    return Confusion(tp=tp, fp=fp, tn=tn, fn=fn)


def mcc(c: Confusion) -> float:
    """Matthews correlation coefficient; 0 when any marginal is empty."""
    denom = (
        (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    )
    if denom == 0:
        return 0.0
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom)


@dataclass(frozen=True)
class LiftRow:
    decile: int
    n_rows: int
    n_positives: int
    cumulative_capture: float


def decile_lift(scores, labels) -> list[LiftRow]:
    """Cumulative positive capture per score-ranked decile.

    Rows are sorted by descending score (ties broken by ascending original
    index); when n is not divisible by 10 the first ``n mod 10`` deciles
    get one extra row.
    """
    s = as_score_array(scores)
    y = as_label_array(labels)
    check_aligned(s, y)
    n = len(s)
    if n < 10:
        raise TooFewRows(f"decile lift needs >= 10 rows, got {n}")
    total_pos = int(y.sum())
    if total_pos == 0:
        raise NoPositives("decile lift needs at least one positive label")
    order = np.argsort(-s, kind="stable")
    sorted_y = y[order]
    base, extra = divmod(n, 10)
    rows: list[LiftRow] = []
    start = 0
    cum_pos = 0
    for d in range(10):
        size = base + (1 if d < extra else 0)
        n_pos = int(sorted_y[start : start + size].sum())
        cum_pos += n_pos
        start += size
        rows.append(
            LiftRow(
                decile=d + 1,
                n_rows=size,
                n_positives=n_pos,
                cumulative_capture=cum_pos / total_pos,
            )
        )
    return rows
