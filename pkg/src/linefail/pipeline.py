"""Two-stage training workflow.

Stage 1 compresses every categorical column into one probability feature
with 2-fold FTRL stacking (each half scored by the model trained on the
other half; test rows get the arithmetic mean of both models). Stage 2
assembles numeric + date + time_diff + stacked probability, selects the
top-k features by preliminary boosted-tree importance on a fixed-seed
sample, evaluates with k-fold out-of-fold predictions, tunes the
MCC-optimal threshold, and refits a final model on all rows.

Every stage draws its randomness from a named sub-seed of the master
seed, so identical inputs and seed reproduce identical artifacts.
"""

from __future__ import annotations

import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import gbt
from .errors import (
    EmptyData,
    EmptyFold,
    LinefailError,
    MissingLabel,
    OneClassOnly,
    UnknownFeature,
)
from .explore import time_diff
from .ftrl import FtrlConfig, FtrlModel, featurize, train_indexed
from .ftrl import save_model as save_ftrl_model
from .ingest import (
    FeatureKind,
    Schema,
    SourceFiles,
    SparseRow,
    assign_fold,
    fnv1a64,
    from_directory,
    read_schemas,
    stream_rows,
)
from .metrics import auc, confusion, log_loss, mcc

STACKED_FEATURE = "ftrl_cat_prob"
TIME_DIFF_FEATURE = "time_diff"


def derive_seed(master: int, name: str) -> int:
    """Named per-stage sub-seed of the master seed."""
    return fnv1a64(f"{master}:{name}".encode()) & ((1 << 63) - 1)


@contextmanager
def _stage(name: str):
    """Tag escaping data/model errors with the pipeline stage."""
    try:
        yield
    except LinefailError as exc:
        raise type(exc)(f"[stage {name}] {exc}") from None


# -- stage 1: stacking ------------------------------------------------------


@dataclass
class StackResult:
    """Out-of-fold stacked probabilities plus fold bookkeeping."""

    train_prob: np.ndarray
    test_prob: Optional[np.ndarray]
    fold_of_row: np.ndarray
    models: tuple[FtrlModel, FtrlModel]
    train_losses: tuple[Optional[float], Optional[float]]
    oof_log_loss: float
    oof_auc: Optional[float]


def stack_hashed(
    train_indices: Sequence[Sequence[int]],
    labels: Sequence[int],
    test_indices: Optional[Sequence[Sequence[int]]],
    config: FtrlConfig,
    seed: int,
) -> StackResult:
    """2-fold stacking over pre-hashed categorical index lists.

    The fold split is a seeded permutation parity, so fold sizes differ
    by at most one row.
    """
    n = len(train_indices)
    if n == 0:
        raise EmptyData("stacking needs at least one training row")
    y = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(derive_seed(seed, "stack-folds"))
    perm = rng.permutation(n)
    fold = np.empty(n, dtype=np.int8)
    fold[perm[0::2]] = 0
    fold[perm[1::2]] = 1

    models = []
    losses = []
    for f in (0, 1):
        model, loss = train_indexed(
            ((train_indices[i], int(y[i])) for i in range(n) if fold[i] == f), config
        )
        models.append(model)
        losses.append(loss)

    train_prob = np.empty(n, dtype=np.float64)
    for i in range(n):
        scorer = models[1] if fold[i] == 0 else models[0]
        train_prob[i] = scorer.predict(train_indices[i])

    test_prob = None
    if test_indices is not None:
        test_prob = np.array(
            [
                0.5 * (models[0].predict(x) + models[1].predict(x))
                for x in test_indices
            ]
        )

    oof_loss = log_loss(train_prob, y)
    try:
        oof_auc: Optional[float] = auc(train_prob, y)
    except OneClassOnly:
        oof_auc = None
    return StackResult(
        train_prob=train_prob,
        test_prob=test_prob,
        fold_of_row=fold,
        models=(models[0], models[1]),
        train_losses=(losses[0], losses[1]),
        oof_log_loss=oof_loss,
        oof_auc=oof_auc,
    )


def stack_categorical(
    train_rows: Iterable[SparseRow],
    test_rows: Optional[Iterable[SparseRow]],
    config: FtrlConfig,
    seed: int,
) -> StackResult:
    """Row-level front end of stack_hashed; labels come from the rows."""
    train_indices = []
    labels = []
    for row in train_rows:
        if row.label is None:
            raise MissingLabel(f"row {row.id} has no label")
        train_indices.append(featurize(row, config.n_buckets))
        labels.append(row.label)
    test_indices = None
    if test_rows is not None:
        test_indices = [featurize(row, config.n_buckets) for row in test_rows]
    return stack_hashed(train_indices, labels, test_indices, config, seed)


# -- feature assembly -------------------------------------------------------


def feature_universe(
    schemas: dict[FeatureKind, Schema], include_stacked: bool = True
) -> list[str]:
    """Numeric columns, date columns, time_diff, stacked probability."""
    names: list[str] = []
    if FeatureKind.NUMERIC in schemas:
        names.extend(fid.raw_name for fid in schemas[FeatureKind.NUMERIC].features)
    if FeatureKind.DATE in schemas:
        names.extend(fid.raw_name for fid in schemas[FeatureKind.DATE].features)
    names.append(TIME_DIFF_FEATURE)
    if include_stacked:
        names.append(STACKED_FEATURE)
    return names


def assemble_features(
    row: SparseRow,
    stacked: Optional[float],
    columns: Sequence[str],
) -> np.ndarray:
    """Dense vector of ``columns`` for one row; absent cells stay NaN.

    Pass the full universe or a selected subset; features of the row that
    are not in ``columns`` are ignored.
    """
    slot = {name: i for i, name in enumerate(columns)}
    out = np.full(len(columns), np.nan)
    for group in (row.numeric, row.date):
        for fid, value in group:
            i = slot.get(fid.raw_name)
            if i is not None:
                out[i] = value
    td = time_diff(row)
    i = slot.get(TIME_DIFF_FEATURE)
    if i is not None and td is not None:
        out[i] = td
    i = slot.get(STACKED_FEATURE)
    if i is not None and stacked is not None:
        out[i] = stacked
    return out


def _materialize(
    files: SourceFiles,
    schemas: dict[FeatureKind, Schema],
    columns: Sequence[str],
    stacked: Optional[np.ndarray],
    keep_positions: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Stream the source files into a dense (rows x columns) matrix.

    ``stacked`` is aligned with the stream order; ``keep_positions``
    restricts output to those stream positions (sorted ascending).
    """
    slot = {name: i for i, name in enumerate(columns)}
    numeric_slots = {}
    date_slots = {}
    if FeatureKind.NUMERIC in schemas:
        for fid in schemas[FeatureKind.NUMERIC].features:
            if fid.raw_name in slot:
                numeric_slots[fid.raw_name] = slot[fid.raw_name]
    if FeatureKind.DATE in schemas:
        for fid in schemas[FeatureKind.DATE].features:
            if fid.raw_name in slot:
                date_slots[fid.raw_name] = slot[fid.raw_name]
    td_slot = slot.get(TIME_DIFF_FEATURE)
    stacked_slot = slot.get(STACKED_FEATURE)

    keep_set = None
    n_out = None
    if keep_positions is not None:
        keep_set = {int(p): i for i, p in enumerate(keep_positions)}
        n_out = len(keep_positions)
    rows_out: list[np.ndarray] = []
    out = None
    for position, row in enumerate(stream_rows(files, schemas)):
        if keep_set is not None:
            target = keep_set.get(position)
            if target is None:
                continue
        vec = np.full(len(columns), np.nan)
        for fid, value in row.numeric:
            i = numeric_slots.get(fid.raw_name)
            if i is not None:
                vec[i] = value
        for fid, value in row.date:
            i = date_slots.get(fid.raw_name)
            if i is not None:
                vec[i] = value
        if td_slot is not None and row.date:
            values = [v for _, v in row.date]
            vec[td_slot] = max(values) - min(values)
        if stacked_slot is not None and stacked is not None:
            vec[stacked_slot] = stacked[position]
        if keep_set is None:
            rows_out.append(vec)
        else:
            if out is None:
                out = np.empty((n_out, len(columns)))
            out[target] = vec
    if keep_set is None:
        return np.array(rows_out) if rows_out else np.empty((0, len(columns)))
    return out if out is not None else np.empty((0, len(columns)))


# -- stage 2: out-of-fold evaluation ----------------------------------------


@dataclass
class OofPredictions:
    """Held-out scores for every training row plus per-fold metrics."""

    scores: np.ndarray
    fold_of_row: np.ndarray
    fold_aucs: list[float]
    pooled_auc: float
    models: list[gbt.Ensemble] = field(default_factory=list)

    @property
    def auc_spread(self) -> float:
        return max(self.fold_aucs) - min(self.fold_aucs)


def cross_validate_oof(
    X,
    y,
    ids: Sequence[int],
    config: gbt.GbtConfig,
    k: int = 3,
    seed: int = 2016,
    threads: int = 1,
) -> OofPredictions:
    """k models, each scoring the fold it never saw; folds by id hash."""
    X = np.asarray(X, dtype=np.float64)
    y_arr = np.asarray(y, dtype=np.int64)
    fold_seed = derive_seed(seed, "oof-folds")
    fold = np.array([assign_fold(int(i), k, fold_seed) for i in ids], dtype=np.int64)
    counts = np.bincount(fold, minlength=k)
    for f in range(k):
        if counts[f] == 0:
            raise EmptyFold(f"fold {f} of {k} received zero rows")
        if counts[f] == len(y_arr):
            raise EmptyFold(f"fold {f} of {k} left zero training rows")
    scores = np.empty(len(y_arr), dtype=np.float64)
    fold_aucs = []
    models = []
    for f in range(k):
        held = fold == f
        model = gbt.fit(
            X[~held],
            y_arr[~held],
            replace(config, seed=derive_seed(seed, f"gbt-fold{f}")),
            threads=threads,
        )
        scores[held] = model.predict_scores(X[held])
        fold_aucs.append(auc(scores[held], y_arr[held]))
        models.append(model)
    return OofPredictions(
        scores=scores,
        fold_of_row=fold,
        fold_aucs=fold_aucs,
        pooled_auc=auc(scores, y_arr),
        models=models,
    )


# -- threshold tuning -------------------------------------------------------


@dataclass
class ThresholdReport:
    curve: list[tuple[float, float]]
    best_threshold: float
    best_mcc: float
    n_flagged: int


def tune_threshold(scores, labels) -> ThresholdReport:
    """Sweep every distinct score as an inclusive cutoff, maximize MCC.

    Ties on MCC resolve to the smaller threshold.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise OneClassOnly("threshold tuning needs both classes")
    order = np.argsort(-s, kind="stable")
    s_desc = s[order]
    y_desc = y[order]
    cum_pos = np.cumsum(y_desc)
    boundaries = np.nonzero(np.append(s_desc[1:] != s_desc[:-1], True))[0]
    n = len(y)
    n_neg = n - n_pos
    curve: list[tuple[float, float]] = []
    for b in boundaries[::-1]:  # ascending thresholds
        tp = int(cum_pos[b])
        fp = int(b + 1 - tp)
        fn = n_pos - tp
        tn = n_neg - fp
        denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
        value = 0.0 if denom == 0 else (tp * tn - fp * fn) / denom**0.5
        curve.append((float(s_desc[b]), value))
    best_threshold, best_mcc = curve[0]
    for threshold, value in curve[1:]:
        if value > best_mcc:
            best_threshold, best_mcc = threshold, value
    n_flagged = int(np.count_nonzero(s >= best_threshold))
    return ThresholdReport(
        curve=curve,
        best_threshold=best_threshold,
        best_mcc=best_mcc,
        n_flagged=n_flagged,
    )


# -- full pipeline ----------------------------------------------------------


@dataclass
class PipelineConfig:
    seed: int = 2016
    ftrl: FtrlConfig = field(default_factory=FtrlConfig)
    gbt: gbt.GbtConfig = field(default_factory=gbt.GbtConfig)
    select: gbt.GbtConfig = field(default_factory=lambda: gbt.PRELIM_SELECTION_CONFIG)
    top_k: int = 200
    oof_folds: int = 3
    selection_sample: int = 100_000
    include_stacked: bool = True
    final_mode: str = "refit"  # "refit" (all rows) or "fold-mean"
    threads: int = 1


@dataclass
class PipelineResult:
    out_dir: Path
    train_ids: np.ndarray
    labels: np.ndarray
    universe: list[str]
    selected_features: list[str]
    stack: Optional[StackResult]
    oof: OofPredictions
    threshold: ThresholdReport
    importance: dict[str, float]
    final_model: Optional[gbt.Ensemble]
    test_ids: Optional[np.ndarray]
    test_scores: Optional[np.ndarray]
    prediction_path: Optional[Path]


def _log(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


def _fmt(x: float) -> str:
    return format(x, ".9g")


def run_full_pipeline(
    train_dir: str | Path,
    test_dir: Optional[str | Path],
    out_dir: str | Path,
    config: Optional[PipelineConfig] = None,
) -> PipelineResult:
    """Execute stacking, assembly, selection, OOF evaluation, threshold
    tuning, and the final fit; write all artifacts under ``out_dir``."""
    cfg = config or PipelineConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t_start = time.monotonic()

    train_files = from_directory(train_dir, "train")
    train_schemas = read_schemas(train_files)
    test_files = None
    test_schemas = None
    if test_dir is not None:
        test_files = from_directory(test_dir, "test")
        test_schemas = read_schemas(test_files)

    # pass 1: ids, labels, hashed categorical tokens
    with _stage("ingest"):
        ids: list[int] = []
        labels: list[int] = []
        train_tokens: list[list[int]] = []
        n_buckets = cfg.ftrl.n_buckets
        for row in stream_rows(train_files, train_schemas):
            if row.label is None:
                raise MissingLabel(f"row {row.id} has no label")
            ids.append(row.id)
            labels.append(row.label)
            train_tokens.append(featurize(row, n_buckets))
        if not ids:
            raise EmptyData(f"no training rows under {train_dir}")
        train_ids = np.array(ids, dtype=np.int64)
        y = np.array(labels, dtype=np.int64)
        _log(f"pipeline: {len(ids)} training rows, positive rate {_fmt(float(y.mean()))}")

        test_ids = None
        test_tokens: Optional[list[list[int]]] = None
        if test_files is not None:
            test_ids_list = []
            test_tokens = []
            for row in stream_rows(test_files, test_schemas):
                test_ids_list.append(row.id)
                test_tokens.append(featurize(row, n_buckets))
            test_ids = np.array(test_ids_list, dtype=np.int64)

    # stage 1: stacking
    stack: Optional[StackResult] = None
    if cfg.include_stacked:
        with _stage("stack"):
            stack = stack_hashed(train_tokens, y, test_tokens, cfg.ftrl, cfg.seed)
            _log(
                "stack: oof log-loss "
                f"{_fmt(stack.oof_log_loss)}"
                + (f", oof auc {_fmt(stack.oof_auc)}" if stack.oof_auc is not None else "")
            )
            _write_stacked(out_dir, train_ids, stack, test_ids)
            save_ftrl_model(stack.models[0], out_dir / "ftrl_fold0.model")
            save_ftrl_model(stack.models[1], out_dir / "ftrl_fold1.model")
    del train_tokens, test_tokens

    universe = feature_universe(train_schemas, include_stacked=cfg.include_stacked)
    train_stacked = stack.train_prob if stack is not None else None

    # feature selection on a fixed-seed sample
    with _stage("select"):
        n = len(train_ids)
        sample_size = min(cfg.selection_sample, n)
        sample_rng = np.random.default_rng(derive_seed(cfg.seed, "selection-sample"))
        sample_positions = np.sort(sample_rng.choice(n, size=sample_size, replace=False))
        X_sample = _materialize(
            train_files, train_schemas, universe, train_stacked, sample_positions
        )
        selected = gbt.select_top_k(
            X_sample,
            y[sample_positions],
            universe,
            cfg.top_k,
            replace(cfg.select, seed=derive_seed(cfg.seed, "gbt-select")),
            threads=cfg.threads,
        )
        del X_sample
        (out_dir / "selected_features.txt").write_text(
            "\n".join(selected) + "\n", encoding="utf-8"
        )
        _log(f"select: kept {len(selected)} of {len(universe)} features")

    # stage 2: out-of-fold evaluation, threshold, final fit
    with _stage("cross-validate"):
        X = _materialize(train_files, train_schemas, selected, train_stacked)
        oof = cross_validate_oof(
            X, y, train_ids, cfg.gbt, k=cfg.oof_folds, seed=cfg.seed, threads=cfg.threads
        )
        _log(
            "oof: fold aucs "
            + ", ".join(_fmt(a) for a in oof.fold_aucs)
            + f"; pooled {_fmt(oof.pooled_auc)}"
        )
    with _stage("tune"):
        report = tune_threshold(oof.scores, y)
        _log(
            f"tune: best mcc {_fmt(report.best_mcc)} at threshold "
            f"{_fmt(report.best_threshold)} ({report.n_flagged} rows flagged)"
        )

    final_model: Optional[gbt.Ensemble] = None
    with _stage("final-fit"):
        if cfg.final_mode == "refit":
            final_model = gbt.fit(
                X,
                y,
                replace(cfg.gbt, seed=derive_seed(cfg.seed, "gbt-final")),
                feature_names=selected,
                threads=cfg.threads,
            )
            importance = gbt.feature_importance(final_model)
            counts = gbt.split_counts(final_model)
            gbt.save_ensemble(final_model, out_dir / "gbt_final.model")
        else:
            importance = {}
            counts = {}
            for model in oof.models:
                model_importance = gbt.feature_importance(model)
                model_counts = gbt.split_counts(model)
                for name in selected:
                    importance[name] = importance.get(name, 0.0) + model_importance.get(name, 0.0) / len(oof.models)
                    counts[name] = counts.get(name, 0) + model_counts.get(name, 0)

    _write_importance(out_dir, selected, importance, counts)
    _write_oof(out_dir, train_ids, oof)
    _write_curve(out_dir, report)

    # test predictions
    test_scores = None
    prediction_path = None
    if test_files is not None:
        with _stage("predict"):
            test_stacked = stack.test_prob if stack is not None else None
            X_test = _materialize(test_files, test_schemas, selected, test_stacked)
            if cfg.final_mode == "refit":
                assert final_model is not None
                test_scores = final_model.predict_scores(X_test)
            else:
                test_scores = np.mean(
                    [model.predict_scores(X_test) for model in oof.models], axis=0
                )
            prediction_path = out_dir / "predictions.csv"
            _write_predictions(prediction_path, test_ids, test_scores, report.best_threshold)

    _write_metrics(out_dir, cfg, stack, oof, report, time.monotonic() - t_start)
    _log(f"pipeline: finished in {time.monotonic() - t_start:.1f}s")
    return PipelineResult(
        out_dir=out_dir,
        train_ids=train_ids,
        labels=y,
        universe=universe,
        selected_features=selected,
        stack=stack,
        oof=oof,
        threshold=report,
        importance=importance,
        final_model=final_model,
        test_ids=test_ids,
        test_scores=test_scores,
        prediction_path=prediction_path,
    )


def _write_stacked(
    out_dir: Path,
    train_ids: np.ndarray,
    stack: StackResult,
    test_ids: Optional[np.ndarray],
) -> None:
    with open(out_dir / "stacked_train.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"Id,fold,{STACKED_FEATURE}\n")
        for row_id, fold, prob in zip(train_ids, stack.fold_of_row, stack.train_prob):
            fh.write(f"{int(row_id)},{int(fold)},{_fmt(prob)}\n")
    if test_ids is not None and stack.test_prob is not None:
        with open(out_dir / "stacked_test.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"Id,{STACKED_FEATURE}\n")
            for row_id, prob in zip(test_ids, stack.test_prob):
                fh.write(f"{int(row_id)},{_fmt(prob)}\n")


def _write_oof(out_dir: Path, train_ids: np.ndarray, oof: OofPredictions) -> None:
    with open(out_dir / "train_oof.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("Id,fold,score\n")
        for row_id, fold, score in zip(train_ids, oof.fold_of_row, oof.scores):
            fh.write(f"{int(row_id)},{int(fold)},{_fmt(score)}\n")


def _write_curve(out_dir: Path, report: ThresholdReport) -> None:
    with open(out_dir / "threshold_curve.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("threshold,mcc\n")
        for threshold, value in report.curve:
            fh.write(f"{_fmt(threshold)},{_fmt(value)}\n")


def _write_importance(
    out_dir: Path,
    selected: Sequence[str],
    importance: dict[str, float],
    counts: dict[str, int],
) -> None:
    ranked = sorted(selected, key=lambda name: -importance.get(name, 0.0))
    with open(out_dir / "feature_importance.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("feature,importance,split_count\n")
        for name in ranked:
            fh.write(f"{name},{_fmt(importance.get(name, 0.0))},{counts.get(name, 0)}\n")


def _write_predictions(
    path: Path, ids: np.ndarray, scores: np.ndarray, threshold: float
) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("Id,score,flag\n")
        for row_id, score in zip(ids, scores):
            flag = 1 if score >= threshold else 0
            fh.write(f"{int(row_id)},{_fmt(score)},{flag}\n")


def _write_metrics(
    out_dir: Path,
    cfg: PipelineConfig,
    stack: Optional[StackResult],
    oof: OofPredictions,
    report: ThresholdReport,
    elapsed: float,
) -> None:
    lines = [
        f"seed={cfg.seed}",
        f"oof_folds={cfg.oof_folds}",
        f"pooled_oof_auc={_fmt(oof.pooled_auc)}",
        "fold_aucs=" + ",".join(_fmt(a) for a in oof.fold_aucs),
        f"auc_spread={_fmt(oof.auc_spread)}",
        f"best_mcc={_fmt(report.best_mcc)}",
        f"best_threshold={_fmt(report.best_threshold)}",
        f"n_flagged={report.n_flagged}",
        f"elapsed_seconds={elapsed:.1f}",
    ]
    if stack is not None:
        lines.insert(2, f"stack_oof_log_loss={_fmt(stack.oof_log_loss)}")
        if stack.oof_auc is not None:
            lines.insert(3, f"stack_oof_auc={_fmt(stack.oof_auc)}")
    (out_dir / "metrics.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
