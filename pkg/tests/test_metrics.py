import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from linefail.errors import (
    EmptyInput,
    LengthMismatch,
    NoPositives,
    OneClassOnly,
    TooFewRows,
)
from linefail.metrics import Confusion, auc, confusion, decile_lift, log_loss, mcc


def pairwise_auc(scores, labels):
    """O(n^2) oracle: positive-over-negative comparisons, ties worth 1/2."""
    wins = 0.0
    pairs = 0
    for si, yi in zip(scores, labels):
        if yi != 1:
            continue
        for sj, yj in zip(scores, labels):
            if yj != 0:
                continue
            pairs += 1
            if si > sj:
                wins += 1.0
            elif si == sj:
                wins += 0.5
    return wins / pairs


class TestLogLoss:
    def test_half_probability(self):
        assert log_loss([0.5], [1]) == pytest.approx(math.log(2), abs=1e-12)

    def test_perfect_prediction_post_clip(self):
        assert log_loss([1.0, 0.0], [1, 0]) <= 1e-14

    def test_matches_independent_summation(self):
        rng = np.random.default_rng(3)
        p = rng.random(100)
        y = rng.integers(0, 2, 100)
        expected = 0.0
        for pi, yi in zip(p, y):
            pi = min(max(pi, 1e-15), 1 - 1e-15)
            expected += -math.log(pi) if yi == 1 else -math.log(1 - pi)
        assert log_loss(p, y) == pytest.approx(expected / 100, rel=1e-12)

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            log_loss([0.5], [1, 0])
        with pytest.raises(EmptyInput):
            log_loss([], [])

    def test_nonnegative_and_monotone_toward_label(self):
        base = log_loss([0.4, 0.6], [1, 0])
        better = log_loss([0.5, 0.6], [1, 0])
        assert base >= 0 and better < base


class TestAuc:
    def test_separated(self):
        assert auc([0.9, 0.1], [1, 0]) == 1.0

    def test_all_ties(self):
        assert auc([0.5] * 10, [1, 0] * 5) == 0.5

    def test_one_class_only(self):
        with pytest.raises(OneClassOnly):
            auc([0.1, 0.9], [1, 1])

    def test_matches_pairwise_oracle_with_ties(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            n = int(rng.integers(5, 40))
            scores = rng.integers(0, 6, n) / 5.0  # coarse grid forces ties
            labels = rng.integers(0, 2, n)
            if labels.sum() in (0, n):
                continue
            assert auc(scores, labels) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)

    @given(
        data=st.lists(
            # grid-valued scores: float exp/affine stay injective on them
            st.tuples(st.integers(0, 1000), st.integers(0, 1)),
            min_size=4,
            max_size=60,
        )
    )
    @settings(max_examples=60)
    def test_invariant_under_increasing_transforms(self, data):
        scores = np.array([s for s, _ in data]) / 1000.0
        labels = np.array([y for _, y in data])
        if labels.sum() in (0, len(labels)):
            return
        base = auc(scores, labels)
        assert auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
        assert auc(3.0 * scores + 7.0, labels) == pytest.approx(base, abs=1e-12)


class TestConfusion:
    def test_threshold_zero_flags_everything(self):
        c = confusion([0.2, 0.8], [1, 0], 0.0)
        assert (c.tn, c.fn) == (0, 0)

    def test_threshold_above_max_flags_nothing(self):
        c = confusion([0.2, 0.8], [1, 0], 0.9)
        assert (c.tp, c.fp) == (0, 0)

    def test_inclusive_comparison(self):
        c = confusion([0.9, 0.2], [1, 0], 0.5)
        assert (c.tp, c.tn, c.fp, c.fn) == (1, 1, 0, 0)
        c = confusion([0.5], [1], 0.5)
        assert c.tp == 1


class TestMcc:
    def test_perfect(self):
        assert mcc(Confusion(tp=50, fp=0, tn=50, fn=0)) == 1.0

    def test_total_disagreement(self):
        assert mcc(Confusion(tp=0, fp=50, tn=0, fn=50)) == -1.0

    def test_degenerate_zero_convention(self):
        assert mcc(Confusion(tp=10, fp=0, tn=0, fn=0)) == 0.0

    @given(
        tp=st.integers(0, 50),
        fp=st.integers(0, 50),
        tn=st.integers(0, 50),
        fn=st.integers(0, 50),
    )
    def test_swap_invariance(self, tp, fp, tn, fn):
        direct = mcc(Confusion(tp=tp, fp=fp, tn=tn, fn=fn))
        swapped = mcc(Confusion(tp=tn, fp=fn, tn=tp, fn=fp))
        assert direct == pytest.approx(swapped, abs=1e-12)


class TestDecileLift:
    def test_monotone_capture_ending_at_one(self):
        rng = np.random.default_rng(7)
        scores = rng.random(1234)
        labels = (rng.random(1234) < 0.05).astype(int)
        rows = decile_lift(scores, labels)
        captures = [r.cumulative_capture for r in rows]
        assert all(b >= a for a, b in zip(captures, captures[1:]))
        assert captures[-1] == pytest.approx(1.0)

    def test_row_counts_differ_by_at_most_one(self):
        rows = decile_lift(list(range(37)), [1] + [0] * 36)
        sizes = [r.n_rows for r in rows]
        assert max(sizes) - min(sizes) <= 1
        assert sum(sizes) == 37

    def test_all_positives_ranked_first(self):
        scores = [1.0] * 5 + [0.0] * 45
        labels = [1] * 5 + [0] * 45
        rows = decile_lift(scores, labels)
        assert rows[0].cumulative_capture == pytest.approx(1.0)

    def test_random_scores_capture_tracks_decile_index(self):
        rng = np.random.default_rng(2)
        n = 100_000
        scores = rng.random(n)
        labels = (rng.random(n) < 0.1).astype(int)
        rows = decile_lift(scores, labels)
        for r in rows:
            assert abs(r.cumulative_capture - r.decile / 10) < 0.05

    def test_errors(self):
        with pytest.raises(TooFewRows):
            decile_lift([0.1] * 9, [1] * 9)
        with pytest.raises(NoPositives):
            decile_lift([0.1] * 10, [0] * 10)
