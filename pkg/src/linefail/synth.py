"""Seeded generator of production-line-shaped datasets with known truth.

Emits row-aligned numeric/categorical/date CSVs in the ingest format plus
a key=value manifest holding the planted failure rules, so pipeline
stages can be tested against exact Bayes-optimal scores at desk scale.

Planted signal (all acting on the failure log-odds):
  * one categorical rule   (a specific value of one categorical column)
  * one numeric threshold  (one always-present numeric column)
  * one time_diff rule     (total time in the line above a threshold)
  * one XOR pair           (two numeric columns, effect when signs differ)

Rows follow one of a fixed set of station flow paths; arrival times
follow a weekly/daily seasonal intensity so the date histogram carries
the configured periodicities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import InvalidConfig, ManifestMismatch
from .explore import time_diff
from .ingest import FeatureKind, SparseRow, format_feature_name

MANIFEST_MAGIC = "linefail-synth-v1"


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 2016
    n_rows: int = 50_000
    n_test_rows: Optional[int] = None  # defaults to n_rows // 2
    positive_rate: float = 0.006
    n_lines: int = 4
    n_stations: int = 52
    n_numeric: int = 60
    n_date: int = 40
    n_categorical: int = 30
    n_flow_paths: int = 12
    weekly_period: float = 16.75
    daily_period: float = 2.39
    tick: float = 0.01
    time_span: Optional[float] = None  # defaults to 8 weekly periods
    cat_coef: float = 2.4
    num_coef: float = 2.8
    td_coef: float = 2.2
    xor_coef: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.positive_rate < 0.5:
            raise InvalidConfig("positive_rate must lie in (0, 0.5)")
        if self.weekly_period <= self.tick or self.daily_period <= self.tick:
            raise InvalidConfig("periods must exceed the tick")
        if self.tick <= 0:
            raise InvalidConfig("tick must be positive")
        if self.n_rows < 10:
            raise InvalidConfig("n_rows must be >= 10")
        if self.n_numeric < 3 or self.n_date < 2 or self.n_categorical < 1:
            raise InvalidConfig("need >= 3 numeric, >= 2 date, >= 1 categorical features")
        if self.n_stations < 3 or not 1 <= self.n_lines <= self.n_stations:
            raise InvalidConfig("need >= 3 stations and 1 <= n_lines <= n_stations")
        if not 1 <= self.n_flow_paths <= self.n_rows:
            raise InvalidConfig("need 1 <= n_flow_paths <= n_rows")

    @property
    def test_rows(self) -> int:
        return self.n_rows // 2 if self.n_test_rows is None else self.n_test_rows

    @property
    def span(self) -> float:
        return 8 * self.weekly_period if self.time_span is None else self.time_span


BOSCH_SHAPE = dict(n_numeric=968, n_categorical=2140, n_date=1156)


@dataclass
class Manifest:
    """Ground truth of a generated dataset (see save/load_manifest)."""

    seed: int
    base_log_odds: float
    achieved_positive_rate: float
    cat_feature: str
    cat_value: str
    cat_coef: float
    num_feature: str
    num_threshold: float
    num_coef: float
    td_threshold: float
    td_coef: float
    xor_feature_a: str
    xor_feature_b: str
    xor_threshold: float
    xor_coef: float
    numeric_features: list[str] = field(default_factory=list)
    date_features: list[str] = field(default_factory=list)
    categorical_features: list[str] = field(default_factory=list)

    def known_names(self) -> frozenset[str]:
        return frozenset(self.numeric_features + self.date_features + self.categorical_features)


@dataclass
class GeneratedData:
    out_dir: Path
    train_files: dict[str, Path]
    test_files: dict[str, Path]
    manifest: Manifest
    manifest_path: Path


class _Layout:
    """Feature-to-station placement shared by train and test generation."""

    def __init__(self, config: SynthConfig, rng: np.random.Generator):
        c = config
        self.station_line = np.array([s * c.n_lines // c.n_stations for s in range(c.n_stations)])
        counter = 0

        def make_names(n: int, kind: FeatureKind, stations: list[int]) -> tuple[list[str], np.ndarray]:
            nonlocal counter
            names = []
            where = np.empty(n, dtype=np.int64)
            for i in range(n):
                st = stations[i % len(stations)] if i < len(stations) else int(rng.integers(2, c.n_stations))
                where[i] = st
                names.append(format_feature_name(int(self.station_line[st]), st, kind, counter))
                counter += 2
            return names, where

        # informative features live at stations 0/1, which every path visits
        numeric_stations = [0, 0, 0] + list(range(1, c.n_stations))
        date_stations = [0, 1] + list(range(2, c.n_stations))
        cat_stations = [0] + list(range(1, c.n_stations))
        self.numeric_names, self.numeric_station = make_names(c.n_numeric, FeatureKind.NUMERIC, numeric_stations)
        self.date_names, self.date_station = make_names(c.n_date, FeatureKind.DATE, date_stations)
        self.cat_names, self.cat_station = make_names(c.n_categorical, FeatureKind.CATEGORICAL, cat_stations)

        others = np.arange(2, c.n_stations)
        paths: list[tuple[int, ...]] = []
        seen = set()
        while len(paths) < c.n_flow_paths:
            size = int(rng.integers(1, max(2, len(others) // 2 + 1)))
            extra = rng.choice(others, size=size, replace=False)
            path = tuple(sorted({0, 1, *extra.tolist()}))
            if path not in seen:
                seen.add(path)
                paths.append(path)
        self.paths = paths
        self.path_station_mask = np.zeros((len(paths), c.n_stations), dtype=bool)
        for p, path in enumerate(paths):
            self.path_station_mask[p, list(path)] = True
        # fraction of the row's span elapsed at each station of each path
        self.date_frac = np.full((len(paths), c.n_date), np.nan)
        for p, path in enumerate(paths):
            pos = {st: i for i, st in enumerate(path)}
            denom = max(len(path) - 1, 1)
            for j, st in enumerate(self.date_station):
                if st in pos:
                    self.date_frac[p, j] = pos[st] / denom


_CAT_VOCAB = [f"T{i}" for i in range(10)]
_CAT_PROBS = np.array([0.20, 0.17, 0.13, 0.11, 0.09, 0.08, 0.06, 0.05, 0.04, 0.07])
_PLANTED_CAT_VALUE = "T9"


def _rule_effects(
    manifest: Manifest,
    numeric: np.ndarray,
    numeric_names: list[str],
    cat_tokens: np.ndarray,
    cat_names: list[str],
    td: np.ndarray,
) -> np.ndarray:
    """Summed planted log-odds effects per row, from written values."""
    n_idx = {name: j for j, name in enumerate(numeric_names)}
    c_idx = {name: j for j, name in enumerate(cat_names)}
    effects = np.zeros(len(numeric))
    effects += manifest.cat_coef * (cat_tokens[:, c_idx[manifest.cat_feature]] == manifest.cat_value)
    num_col = numeric[:, n_idx[manifest.num_feature]]
    effects += manifest.num_coef * (num_col > manifest.num_threshold)
    effects += manifest.td_coef * (td > manifest.td_threshold)
    a = numeric[:, n_idx[manifest.xor_feature_a]] > manifest.xor_threshold
    b = numeric[:, n_idx[manifest.xor_feature_b]] > manifest.xor_threshold
    effects += manifest.xor_coef * (a != b)
    return effects


def _seasonal_arrivals(config: SynthConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    """Arrival times via inverse-CDF sampling of the seasonal intensity."""
    grid = np.arange(0.0, config.span, config.tick)
    intensity = (1.0 + 0.8 * np.cos(2 * np.pi * grid / config.weekly_period)) * (
        1.0 + 0.35 * np.cos(2 * np.pi * grid / config.daily_period)
    )
    cdf = np.cumsum(intensity)
    cdf /= cdf[-1]
    return np.interp(rng.random(n), cdf, grid)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _calibrate_base(effects: np.ndarray, target: float) -> float:
    lo, hi = -30.0, 10.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _sigmoid(mid + effects).mean() > target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class _Block:
    """All materialized values of one generated split (train or test)."""

    def __init__(
        self,
        config: SynthConfig,
        layout: _Layout,
        rng: np.random.Generator,
        n: int,
        first_id: int,
    ):
        c = config
        self.ids = np.arange(first_id, first_id + n)
        # guarantee every path appears at least once (when rows allow)
        path_of_row = rng.integers(0, len(layout.paths), size=n)
        n_forced = min(n, len(layout.paths))
        path_of_row[:n_forced] = np.arange(n_forced)
        self.path_of_row = path_of_row
        self.numeric = np.round(rng.standard_normal((n, c.n_numeric)), 3)
        token_draw = rng.choice(len(_CAT_VOCAB), size=(n, c.n_categorical), p=_CAT_PROBS)
        self.cat_tokens = np.array(_CAT_VOCAB, dtype=object)[token_draw]
        t0 = _seasonal_arrivals(c, rng, n)
        self.span_of_row = np.round(0.05 + rng.gamma(2.0, 0.35, size=n), 2)
        frac = layout.date_frac[path_of_row]  # (n, n_date), NaN when off-path
        self.dates = np.round(t0[:, None] + self.span_of_row[:, None] * frac, 2)
        present_dates = ~np.isnan(self.dates)
        lo = np.where(present_dates, self.dates, np.inf).min(axis=1)
        hi = np.where(present_dates, self.dates, -np.inf).max(axis=1)
        self.td = hi - lo
        self.station_mask = layout.path_station_mask[path_of_row]  # (n, n_stations)


def _write_csv(
    path: Path,
    ids: np.ndarray,
    names: list[str],
    stations: np.ndarray,
    station_mask: np.ndarray,
    cells_fmt,
    labels: Optional[np.ndarray],
) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = "Id," + ",".join(names)
        if labels is not None:
            header += ",Response"
        fh.write(header + "\n")
        n = len(ids)
        for i in range(n):
            present = station_mask[i]
            cells = [str(int(ids[i]))]
            cells.extend(
                cells_fmt(i, j) if present[stations[j]] else "" for j in range(len(names))
            )
            if labels is not None:
                cells.append(str(int(labels[i])))
            fh.write(",".join(cells) + "\n")


def generate(config: SynthConfig, out_dir: str | Path) -> GeneratedData:
    """Write train/test source files, Bayes score CSVs, and the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    layout = _Layout(config, np.random.default_rng([config.seed, 0]))

    train = _Block(config, layout, np.random.default_rng([config.seed, 1]), config.n_rows, 0)
    test = _Block(
        config, layout, np.random.default_rng([config.seed, 2]), config.test_rows, config.n_rows
    )

    manifest = Manifest(
        seed=config.seed,
        base_log_odds=0.0,
        achieved_positive_rate=0.0,
        cat_feature=layout.cat_names[0],
        cat_value=_PLANTED_CAT_VALUE,
        cat_coef=config.cat_coef,
        num_feature=layout.numeric_names[0],
        num_threshold=0.8,
        num_coef=config.num_coef,
        td_threshold=round(float(np.quantile(train.td, 0.75)), 6),
        td_coef=config.td_coef,
        xor_feature_a=layout.numeric_names[1],
        xor_feature_b=layout.numeric_names[2],
        xor_threshold=0.0,
        xor_coef=config.xor_coef,
        numeric_features=layout.numeric_names,
        date_features=layout.date_names,
        categorical_features=layout.cat_names,
    )

    effects_train = _rule_effects(
        manifest, train.numeric, layout.numeric_names, train.cat_tokens, layout.cat_names, train.td
    )
    manifest.base_log_odds = _calibrate_base(effects_train, config.positive_rate)
    bayes_train = _sigmoid(manifest.base_log_odds + effects_train)
    effects_test = _rule_effects(
        manifest, test.numeric, layout.numeric_names, test.cat_tokens, layout.cat_names, test.td
    )
    bayes_test = _sigmoid(manifest.base_log_odds + effects_test)

    label_rng = np.random.default_rng([config.seed, 3])
    labels_train = (label_rng.random(config.n_rows) < bayes_train).astype(int)
    labels_test = (label_rng.random(config.test_rows) < bayes_test).astype(int)
    manifest.achieved_positive_rate = float(labels_train.mean())

    def emit(block: _Block, prefix: str, labels: Optional[np.ndarray]) -> dict[str, Path]:
        paths = {}
        paths["numeric"] = out_dir / f"{prefix}_numeric.csv"
        _write_csv(
            paths["numeric"],
            block.ids,
            layout.numeric_names,
            layout.numeric_station,
            block.station_mask,
            lambda i, j: format(block.numeric[i, j], ".3f"),
            labels,
        )
        paths["categorical"] = out_dir / f"{prefix}_categorical.csv"
        _write_csv(
            paths["categorical"],
            block.ids,
            layout.cat_names,
            layout.cat_station,
            block.station_mask,
            lambda i, j: block.cat_tokens[i, j],
            None,
        )
        paths["date"] = out_dir / f"{prefix}_date.csv"
        date_present = ~np.isnan(block.dates)
        _write_csv(
            paths["date"],
            block.ids,
            layout.date_names,
            layout.date_station,
            np.ones_like(block.station_mask),  # presence decided per cell below
            lambda i, j: format(block.dates[i, j], ".2f") if date_present[i, j] else "",
            None,
        )
        return paths

    train_files = emit(train, "train", labels_train)
    test_files = emit(test, "test", None)

    def write_scores(path: Path, ids: np.ndarray, scores: np.ndarray) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("Id,score\n")
            for row_id, score in zip(ids, scores):
                fh.write(f"{int(row_id)},{format(score, '.9g')}\n")

    write_scores(out_dir / "train_bayes.csv", train.ids, bayes_train)
    write_scores(out_dir / "test_bayes.csv", test.ids, bayes_test)
    with open(out_dir / "test_labels.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("Id,Response\n")
        for row_id, label in zip(test.ids, labels_test):
            fh.write(f"{int(row_id)},{int(label)}\n")

    manifest_path = out_dir / "manifest.txt"
    save_manifest(manifest, manifest_path)
    return GeneratedData(
        out_dir=out_dir,
        train_files=train_files,
        test_files=test_files,
        manifest=manifest,
        manifest_path=manifest_path,
    )


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{MANIFEST_MAGIC}\n")
        fh.write(f"seed={manifest.seed}\n")
        fh.write(f"base_log_odds={manifest.base_log_odds!r}\n")
        fh.write(f"achieved_positive_rate={manifest.achieved_positive_rate!r}\n")
        fh.write(f"rule.categorical.feature={manifest.cat_feature}\n")
        fh.write(f"rule.categorical.value={manifest.cat_value}\n")
        fh.write(f"rule.categorical.coef={manifest.cat_coef!r}\n")
        fh.write(f"rule.numeric.feature={manifest.num_feature}\n")
        fh.write(f"rule.numeric.threshold={manifest.num_threshold!r}\n")
        fh.write(f"rule.numeric.coef={manifest.num_coef!r}\n")
        fh.write(f"rule.time_diff.threshold={manifest.td_threshold!r}\n")
        fh.write(f"rule.time_diff.coef={manifest.td_coef!r}\n")
        fh.write(f"rule.xor.feature_a={manifest.xor_feature_a}\n")
        fh.write(f"rule.xor.feature_b={manifest.xor_feature_b}\n")
        fh.write(f"rule.xor.threshold={manifest.xor_threshold!r}\n")
        fh.write(f"rule.xor.coef={manifest.xor_coef!r}\n")
        fh.write(f"features.numeric={','.join(manifest.numeric_features)}\n")
        fh.write(f"features.date={','.join(manifest.date_features)}\n")
        fh.write(f"features.categorical={','.join(manifest.categorical_features)}\n")


def load_manifest(path: str | Path) -> Manifest:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        if fh.readline().strip() != MANIFEST_MAGIC:
            raise ManifestMismatch(f"{path}: not a {MANIFEST_MAGIC} manifest")
        for line in fh:
            key, _, value = line.rstrip("\n").partition("=")
            values[key] = value
    return Manifest(
        seed=int(values["seed"]),
        base_log_odds=float(values["base_log_odds"]),
        achieved_positive_rate=float(values["achieved_positive_rate"]),
        cat_feature=values["rule.categorical.feature"],
        cat_value=values["rule.categorical.value"],
        cat_coef=float(values["rule.categorical.coef"]),
        num_feature=values["rule.numeric.feature"],
        num_threshold=float(values["rule.numeric.threshold"]),
        num_coef=float(values["rule.numeric.coef"]),
        td_threshold=float(values["rule.time_diff.threshold"]),
        td_coef=float(values["rule.time_diff.coef"]),
        xor_feature_a=values["rule.xor.feature_a"],
        xor_feature_b=values["rule.xor.feature_b"],
        xor_threshold=float(values["rule.xor.threshold"]),
        xor_coef=float(values["rule.xor.coef"]),
        numeric_features=values["features.numeric"].split(","),
        date_features=values["features.date"].split(","),
        categorical_features=values["features.categorical"].split(","),
    )


def bayes_scores(manifest: Manifest, rows: Iterable[SparseRow]) -> list[float]:
    """True conditional failure probability per row under the manifest."""
    known = manifest.known_names()
    scores = []
    for row in rows:
        values = {fid.raw_name: v for fid, v in row.numeric}
        tokens = {fid.raw_name: v for fid, v in row.categorical}
        for group in (row.numeric, row.date, row.categorical):
            for fid, _ in group:
                if fid.raw_name not in known:
                    raise ManifestMismatch(
                        f"row {row.id} carries feature {fid.raw_name} unknown to the manifest"
                    )
        logit = manifest.base_log_odds
        if tokens.get(manifest.cat_feature) == manifest.cat_value:
            logit += manifest.cat_coef
        if values.get(manifest.num_feature, -math.inf) > manifest.num_threshold:
            logit += manifest.num_coef
        td = time_diff(row)
        if td is not None and td > manifest.td_threshold:
            logit += manifest.td_coef
        a = values.get(manifest.xor_feature_a)
        b = values.get(manifest.xor_feature_b)
        if a is not None and b is not None:
            if (a > manifest.xor_threshold) != (b > manifest.xor_threshold):
                logit += manifest.xor_coef
        scores.append(1.0 / (1.0 + math.exp(-logit)) if logit >= 0 else math.exp(logit) / (1.0 + math.exp(logit)))
    return scores
