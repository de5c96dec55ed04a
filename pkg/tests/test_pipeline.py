import numpy as np
import pytest

from conftest import make_row
from linefail.errors import EmptyFold, OneClassOnly, UnknownFeature
from linefail.ftrl import FtrlConfig, train_indexed
from linefail.gbt import GbtConfig
from linefail.ingest import from_directory, read_schemas, stream_rows
from linefail.metrics import auc, confusion, mcc
from linefail.pipeline import (
    PipelineConfig,
    STACKED_FEATURE,
    TIME_DIFF_FEATURE,
    assemble_features,
    cross_validate_oof,
    feature_universe,
    run_full_pipeline,
    stack_categorical,
    stack_hashed,
    tune_threshold,
)
from linefail.synth import SynthConfig, generate

FAST_GBT = GbtConfig(learning_rate=0.1, n_estimators=25, max_depth=3, min_child_weight=1.0)
FAST_SELECT = GbtConfig(learning_rate=0.1, n_estimators=25, max_depth=3, min_child_weight=1.0)
FAST_FTRL = FtrlConfig(alpha=0.3, l1=0.1, l2=0.5, hash_bits=18)


def fast_config(seed=2016, **kwargs) -> PipelineConfig:
    base = dict(seed=seed, ftrl=FAST_FTRL, gbt=FAST_GBT, select=FAST_SELECT, top_k=200)
    base.update(kwargs)
    return PipelineConfig(**base)


def _tokens(n, rng, informative_rate=0.2):
    """Hashed token lists with one planted failure-implying category."""
    from linefail.ftrl import featurize_pairs

    tokens, labels = [], []
    for i in range(n):
        bad = rng.random() < informative_rate
        pairs = [("c0", "BAD" if bad else "OK"), ("c1", f"T{rng.integers(0, 5)}")]
        tokens.append(featurize_pairs(pairs, 2**18))
        labels.append(int(bad))
    return tokens, labels


class TestStacking:
    def test_fold_sizes_differ_by_at_most_one(self):
        rng = np.random.default_rng(0)
        for n in (5, 10, 101, 256):
            tokens, labels = _tokens(n, rng)
            result = stack_hashed(tokens, labels, None, FAST_FTRL, seed=7)
            sizes = np.bincount(result.fold_of_row, minlength=2)
            assert abs(int(sizes[0]) - int(sizes[1])) <= 1

    def test_test_probability_is_mean_of_fold_models(self):
        rng = np.random.default_rng(1)
        tokens, labels = _tokens(300, rng)
        test_tokens, _ = _tokens(50, rng)
        result = stack_hashed(tokens, labels, test_tokens, FAST_FTRL, seed=7)
        for x, prob in zip(test_tokens, result.test_prob):
            expected = 0.5 * (result.models[0].predict(x) + result.models[1].predict(x))
            assert prob == expected

    def test_no_leakage_train_scores_come_from_other_fold_model(self):
        rng = np.random.default_rng(2)
        tokens, labels = _tokens(400, rng)
        result = stack_hashed(tokens, labels, None, FAST_FTRL, seed=3)
        fold = result.fold_of_row
        # retrain each fold model independently and reproduce the stacked column
        for f in (0, 1):
            model, _ = train_indexed(
                ((tokens[i], labels[i]) for i in range(len(tokens)) if fold[i] == f),
                FAST_FTRL,
            )
            other = np.nonzero(fold != f)[0]
            for i in other:
                assert result.train_prob[i] == model.predict(tokens[i])

    def test_deterministic_category_reaches_high_stacked_auc(self, tmp_path):
        config = SynthConfig(
            seed=21, n_rows=6000, n_test_rows=0, positive_rate=0.08,
            cat_coef=14.0, num_coef=0.0, td_coef=0.0, xor_coef=0.0,
        )
        generate(config, tmp_path)
        files = from_directory(tmp_path, "train")
        rows = list(stream_rows(files, read_schemas(files)))
        result = stack_categorical(rows, None, FAST_FTRL, seed=5)
        labels = np.array([r.label for r in rows])
        assert auc(result.train_prob, labels) >= 0.9


class TestAssembleFeatures:
    def test_row_without_dates_leaves_time_diff_missing(self):
        columns = ["L0_S0_F0", TIME_DIFF_FEATURE, STACKED_FEATURE]
        row = make_row(1, numeric={"L0_S0_F0": 1.5})
        vec = assemble_features(row, 0.25, columns)
        assert vec[0] == 1.5
        assert np.isnan(vec[1])
        assert vec[2] == 0.25

    def test_selected_restricts_and_orders(self):
        row = make_row(
            1,
            numeric={"L0_S0_F0": 1.0, "L0_S1_F2": 2.0},
            date={"L0_S0_D1": 5.0, "L0_S1_D3": 8.0},
        )
        vec = assemble_features(row, None, ["L0_S1_F2", TIME_DIFF_FEATURE])
        assert vec.tolist() == [2.0, 3.0]

    def test_extra_row_features_ignored(self):
        row = make_row(1, numeric={"L9_S9_F9": 4.0})
        vec = assemble_features(row, None, ["L0_S0_F0"])
        assert np.isnan(vec[0])


class TestCrossValidateOof:
    @staticmethod
    def _data(n=900, seed=4):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, 6))
        logit = -4.0 + 3.2 * (X[:, 2] > 0.5) + 2.8 * (X[:, 4] > 0)
        y = (rng.random(n) < 1 / (1 + np.exp(-logit))).astype(int)
        return X, y, np.arange(n)

    def test_every_row_scored_exactly_once(self):
        X, y, ids = self._data()
        oof = cross_validate_oof(X, y, ids, FAST_GBT, k=3, seed=11)
        assert len(oof.scores) == len(y)
        assert np.isfinite(oof.scores).all()
        assert set(np.unique(oof.fold_of_row)) == {0, 1, 2}
        assert len(oof.fold_aucs) == 3

    def test_scores_come_from_held_out_models(self):
        X, y, ids = self._data()
        oof = cross_validate_oof(X, y, ids, FAST_GBT, k=3, seed=11)
        for f, model in enumerate(oof.models):
            held = oof.fold_of_row == f
            assert np.array_equal(oof.scores[held], model.predict_scores(X[held]))

    def test_learns_planted_signal(self):
        X, y, ids = self._data(n=2000)
        oof = cross_validate_oof(X, y, ids, FAST_GBT, k=3, seed=11)
        assert oof.pooled_auc >= 0.8

    def test_empty_fold_raises(self):
        X = np.random.default_rng(0).standard_normal((2, 3))
        with pytest.raises(EmptyFold):
            cross_validate_oof(X, [0, 1], [0, 1], FAST_GBT, k=3, seed=1)


class TestTuneThreshold:
    def test_perfect_separation(self):
        report = tune_threshold([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert report.best_threshold == 0.8
        assert report.best_mcc == 1.0
        assert report.n_flagged == 2

    def test_one_class_only(self):
        with pytest.raises(OneClassOnly):
            tune_threshold([0.5, 0.6], [1, 1])

    def test_matches_brute_force_over_every_cutoff(self):
        rng = np.random.default_rng(6)
        for _ in range(30):
            n = int(rng.integers(10, 200))
            scores = rng.integers(0, 40, n) / 40.0
            labels = rng.integers(0, 2, n)
            if labels.sum() in (0, n):
                continue
            report = tune_threshold(scores, labels)
            best = None
            for t in sorted(set(scores.tolist())):
                value = mcc(confusion(scores, labels, t))
                if best is None or value > best[1]:
                    best = (t, value)
            assert report.best_threshold == best[0]
            assert report.best_mcc == pytest.approx(best[1], abs=1e-12)

    def test_curve_covers_distinct_scores(self):
        scores = [0.1, 0.1, 0.5, 0.9]
        report = tune_threshold(scores, [0, 0, 1, 1])
        assert [t for t, _ in report.curve] == [0.1, 0.5, 0.9]


@pytest.fixture(scope="module")
def pipeline_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipedata")
    generate(SynthConfig(seed=31, n_rows=1500, n_test_rows=300, positive_rate=0.05), out)
    return out


class TestRunFullPipeline:
    def test_artifacts_and_no_leakage_bookkeeping(self, pipeline_data, tmp_path):
        result = run_full_pipeline(pipeline_data, pipeline_data, tmp_path, fast_config())
        assert result.prediction_path.exists()
        assert (tmp_path / "metrics.txt").exists()
        assert (tmp_path / "threshold_curve.csv").exists()
        assert (tmp_path / "feature_importance.csv").exists()
        assert (tmp_path / "stacked_train.csv").exists()
        assert (tmp_path / "gbt_final.model").exists()
        # fold bookkeeping: stacked fold and oof fold recorded per row
        assert set(np.unique(result.stack.fold_of_row)) == {0, 1}
        assert set(np.unique(result.oof.fold_of_row)) == {0, 1, 2}
        # flags consistent with the tuned threshold
        lines = result.prediction_path.read_text().splitlines()[1:]
        for line in lines[:50]:
            _, score, flag = line.split(",")
            assert (float(score) >= result.threshold.best_threshold) == (flag == "1")

    def test_byte_identical_reruns(self, pipeline_data, tmp_path):
        a = run_full_pipeline(pipeline_data, pipeline_data, tmp_path / "a", fast_config())
        b = run_full_pipeline(pipeline_data, pipeline_data, tmp_path / "b", fast_config())
        for name in ("predictions.csv", "train_oof.csv", "stacked_train.csv", "threshold_curve.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_ablation_loses_auc_on_categorical_signal(self, tmp_path):
        data_dir = tmp_path / "data"
        generate(
            SynthConfig(
                seed=41, n_rows=2500, n_test_rows=0, positive_rate=0.08,
                cat_coef=14.0, num_coef=0.0, td_coef=0.0, xor_coef=0.0,
            ),
            data_dir,
        )
        with_stack = run_full_pipeline(data_dir, None, tmp_path / "with", fast_config())
        without = run_full_pipeline(
            data_dir, None, tmp_path / "without", fast_config(include_stacked=False)
        )
        assert without.stack is None
        assert STACKED_FEATURE not in without.universe
        assert with_stack.oof.pooled_auc > without.oof.pooled_auc

    def test_fold_mean_final_mode(self, pipeline_data, tmp_path):
        result = run_full_pipeline(
            pipeline_data, pipeline_data, tmp_path, fast_config(final_mode="fold-mean")
        )
        assert result.final_model is None
        assert result.test_scores is not None
