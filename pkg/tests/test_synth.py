import math

import numpy as np
import pytest

from conftest import make_row
from linefail.errors import InvalidConfig, ManifestMismatch
from linefail.explore import analyze_periodicity, flow_path_census
from linefail.gbt import GbtConfig, fit
from linefail.ingest import from_directory, read_schemas, stream_rows
from linefail.metrics import auc
from linefail.pipeline import assemble_features, feature_universe
from linefail.synth import (
    Manifest,
    SynthConfig,
    bayes_scores,
    generate,
    load_manifest,
)


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    config = SynthConfig(seed=5, n_rows=4000, n_test_rows=800)
    data = generate(config, out)
    files = from_directory(out, "train")
    rows = list(stream_rows(files, read_schemas(files)))
    return config, data, rows


def read_scores(path):
    return np.array([float(line.split(",")[1]) for line in path.read_text().splitlines()[1:]])


class TestGenerate:
    def test_regeneration_is_byte_identical(self, tmp_path):
        config = SynthConfig(seed=9, n_rows=300, n_test_rows=50)
        a = generate(config, tmp_path / "a")
        b = generate(config, tmp_path / "b")
        for name in ("train_numeric.csv", "train_categorical.csv", "train_date.csv",
                     "test_numeric.csv", "manifest.txt", "train_bayes.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_positive_count_within_three_sigma(self, small_data):
        config, data, rows = small_data
        n_pos = sum(r.label for r in rows)
        expectation = config.n_rows * config.positive_rate
        sigma = math.sqrt(config.n_rows * config.positive_rate * (1 - config.positive_rate))
        assert abs(n_pos - expectation) <= 3 * sigma

    def test_census_has_exactly_configured_paths(self, small_data):
        config, data, rows = small_data
        assert len(flow_path_census(rows)) == config.n_flow_paths

    def test_round_trips_through_ingest_with_exact_cell_counts(self, small_data):
        config, data, rows = small_data
        assert len(rows) == config.n_rows
        expected = 0
        for path in data.train_files.values():
            with open(path) as fh:
                header = fh.readline().rstrip("\n").split(",")
                last = len(header) - 1 if header[-1] == "Response" else len(header)
                for line in fh:
                    cells = line.rstrip("\n").split(",")
                    expected += sum(1 for cell in cells[1:last] if cell)
        assert sum(r.n_present() for r in rows) == expected

    def test_every_row_has_at_least_two_dates(self, small_data):
        _, _, rows = small_data
        assert all(len(r.date) >= 2 for r in rows)

    def test_invalid_configs(self):
        with pytest.raises(InvalidConfig):
            SynthConfig(positive_rate=0.7)
        with pytest.raises(InvalidConfig):
            SynthConfig(tick=0.0)
        with pytest.raises(InvalidConfig):
            SynthConfig(weekly_period=0.005, tick=0.01)
        with pytest.raises(InvalidConfig):
            SynthConfig(n_numeric=2)


class TestBayesScores:
    def test_recomputation_matches_emitted_scores(self, small_data):
        config, data, rows = small_data
        manifest = load_manifest(data.manifest_path)
        recomputed = bayes_scores(manifest, rows)
        emitted = read_scores(data.out_dir / "train_bayes.csv")
        assert np.allclose(recomputed, emitted, rtol=0, atol=1e-9)

    def test_bayes_dominates_fitted_model_out_of_sample(self, small_data):
        config, data, rows = small_data
        manifest = load_manifest(data.manifest_path)
        scores = np.array(bayes_scores(manifest, rows))
        labels = np.array([r.label for r in rows])
        files = from_directory(data.out_dir, "train")
        schemas = read_schemas(files)
        columns = feature_universe(schemas, include_stacked=False)
        X = np.array([assemble_features(r, None, columns) for r in rows])
        half = len(rows) // 2
        model = fit(
            X[:half], labels[:half],
            GbtConfig(learning_rate=0.1, n_estimators=30, max_depth=4, min_child_weight=1.0),
        )
        held_bayes = auc(scores[half:], labels[half:])
        held_model = auc(model.predict_scores(X[half:]), labels[half:])
        assert held_bayes >= held_model - 0.01

    def test_row_matching_no_rule_gets_base_rate(self):
        manifest = Manifest(
            seed=0, base_log_odds=-3.0, achieved_positive_rate=0.05,
            cat_feature="L0_S0_F4", cat_value="T9", cat_coef=2.0,
            num_feature="L0_S0_F0", num_threshold=0.8, num_coef=2.0,
            td_threshold=0.9, td_coef=2.0,
            xor_feature_a="L0_S0_F2", xor_feature_b="L0_S0_F6", xor_threshold=0.0, xor_coef=2.0,
            numeric_features=["L0_S0_F0", "L0_S0_F2", "L0_S0_F6"],
            date_features=["L0_S0_D1"],
            categorical_features=["L0_S0_F4"],
        )
        row = make_row(1, numeric={"L0_S0_F0": 0.0, "L0_S0_F2": 1.0, "L0_S0_F6": 1.0})
        assert bayes_scores(manifest, [row]) == [pytest.approx(1 / (1 + math.exp(3.0)))]

    def test_deterministic_rule_row_reads_099_from_manifest(self):
        base = -8.0
        manifest = Manifest(
            seed=0, base_log_odds=base, achieved_positive_rate=0.05,
            cat_feature="L0_S0_F4", cat_value="T9",
            cat_coef=math.log(99.0) - base,  # base + coef = ln 99 => p = 0.99
            num_feature="L0_S0_F0", num_threshold=0.8, num_coef=0.0,
            td_threshold=0.9, td_coef=0.0,
            xor_feature_a="L0_S0_F2", xor_feature_b="L0_S0_F6", xor_threshold=0.0, xor_coef=0.0,
            numeric_features=["L0_S0_F0", "L0_S0_F2", "L0_S0_F6"],
            date_features=[],
            categorical_features=["L0_S0_F4"],
        )
        row = make_row(1, categorical={"L0_S0_F4": "T9"})
        assert bayes_scores(manifest, [row])[0] == pytest.approx(0.99, abs=1e-12)

    def test_alien_feature_raises_manifest_mismatch(self, small_data):
        config, data, rows = small_data
        manifest = load_manifest(data.manifest_path)
        alien = make_row(10**6, numeric={"L9_S99_F99999": 1.0})
        with pytest.raises(ManifestMismatch):
            bayes_scores(manifest, [alien])


class TestPeriodicityLinkage:
    def test_weekly_period_recovered_within_one_tick(self, tmp_path):
        config = SynthConfig(seed=11, n_rows=20_000, n_test_rows=0)
        generate(config, tmp_path)
        files = from_directory(tmp_path, "train")
        report = analyze_periodicity(stream_rows(files), tick=0.25, max_lag=40.0)
        assert abs(report.dominant_period - config.weekly_period) <= 1.0


class TestBoschShape:
    def test_full_width_schemas(self, tmp_path):
        config = SynthConfig(
            seed=3, n_rows=40, n_test_rows=10,
            n_numeric=968, n_categorical=2140, n_date=1156,
        )
        generate(config, tmp_path)
        files = from_directory(tmp_path, "train")
        schemas = read_schemas(files)
        universe = feature_universe(schemas, include_stacked=True)
        assert len(universe) == 968 + 1156 + 1 + 1 == 2126
