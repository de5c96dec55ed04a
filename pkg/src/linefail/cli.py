"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data/model error (stage-tagged).
Every run echoes its configuration and master seed to standard error;
an optional ``--config`` key=value file supplies defaults that explicit
flags override.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import explore as explore_mod
from . import gbt, metrics, synth
from .errors import EmptyData, IdMismatch, LinefailError, MissingLabel, UnknownFeature
from .ftrl import FtrlConfig, featurize
from .ingest import assign_fold, from_directory, read_schemas, stream_rows
from .pipeline import (
    PipelineConfig,
    STACKED_FEATURE,
    _materialize,
    feature_universe,
    run_full_pipeline,
    stack_hashed,
    tune_threshold,
)

DEFAULT_SEED = 2016


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage errors with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _fmt(x: float) -> str:
    return format(x, ".9g")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master random seed")
    p.add_argument("--threads", type=int, default=1, help="parallel workers; -1 uses all cores")
    p.add_argument("--config", type=str, default=None, help="key=value file of flag defaults")


def _add_ftrl_flags(p: argparse.ArgumentParser, prefix: str = "") -> None:
    p.add_argument(f"--{prefix}alpha", type=float, default=0.05, help="FTRL per-coordinate learning-rate scale")
    p.add_argument(f"--{prefix}beta", type=float, default=1.0, help="FTRL learning-rate smoothing")
    p.add_argument(f"--{prefix}l1", type=float, default=1.0, help="FTRL L1 regularization")
    p.add_argument(f"--{prefix}l2", type=float, default=1.0, help="FTRL L2 regularization")
    p.add_argument(f"--{prefix}hash-bits", type=int, default=28, help="hashed space size exponent (D = 2^bits)")
    p.add_argument(f"--{prefix}epochs", type=int, default=1, help="passes over the training stream")


def _add_gbt_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--learning-rate", type=float, default=0.01, help="shrinkage per tree")
    p.add_argument("--n-estimators", type=int, default=100, help="boosting rounds")
    p.add_argument("--max-depth", type=int, default=7, help="maximum tree depth")
    p.add_argument("--min-child-weight", type=float, default=5.0, help="minimum hessian sum per child")
    p.add_argument("--lambda-leaf", type=float, default=1.0, help="L2 penalty on leaf values")
    p.add_argument("--gamma", type=float, default=0.0, help="minimum gain to split")
    p.add_argument("--subsample-rows", type=float, default=1.0, help="row fraction per tree")
    p.add_argument("--subsample-cols", type=float, default=1.0, help="column fraction per tree")
    p.add_argument("--patience", type=int, default=10, help="early-stopping rounds without improvement")


def build_parser() -> tuple[_Parser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="linefail", description=__doc__)
    subparsers = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    commands: dict[str, argparse.ArgumentParser] = {}

    def add_command(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, help=help_text)
        commands[name] = sub
        _add_common(sub)
        return sub

    p = add_command("synth", "generate a seeded synthetic dataset with planted truth")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--rows", type=int, default=50_000, help="training rows")
    p.add_argument("--test-rows", type=int, default=None, help="test rows (default rows/2)")
    p.add_argument("--positive-rate", type=float, default=0.006, help="target failure rate")
    p.add_argument("--numeric", type=int, default=60, help="numeric feature count")
    p.add_argument("--date", type=int, default=40, help="date feature count")
    p.add_argument("--categorical", type=int, default=30, help="categorical feature count")
    p.add_argument("--flow-paths", type=int, default=12, help="distinct station paths")
    p.add_argument("--bosch-shape", action="store_true", help="emit full-width 968/2140/1156 schemas")
    p.add_argument("--cat-coef", type=float, default=2.4, help="categorical rule log-odds effect")
    p.add_argument("--num-coef", type=float, default=2.8, help="numeric threshold rule effect")
    p.add_argument("--td-coef", type=float, default=2.2, help="time_diff rule effect")
    p.add_argument("--xor-coef", type=float, default=1.0, help="XOR pair rule effect")
    p.add_argument("--weekly-period", type=float, default=16.75, help="weekly period in ticks")
    p.add_argument("--daily-period", type=float, default=2.39, help="daily period in ticks")
    p.add_argument("--tick", type=float, default=0.01, help="date granularity")

    p = add_command("explore", "per-station/line statistics, flow paths, periodicity")
    p.add_argument("--train-dir", required=True, help="directory with train_*.csv files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tick", type=float, default=0.01, help="date histogram granularity")
    p.add_argument("--max-lag", type=float, default=100.0, help="autocorrelation lag cap in ticks")
    p.add_argument("--folds", type=int, default=None, help="also emit folds.csv with this many folds")

    p = add_command("stack", "2-fold FTRL stacking of the categorical columns")
    p.add_argument("--train-dir", required=True, help="directory with train_*.csv files")
    p.add_argument("--test-dir", default=None, help="directory with test_*.csv files")
    p.add_argument("--out", required=True, help="output directory")
    _add_ftrl_flags(p)

    p = add_command("select", "top-k feature selection by preliminary boosting")
    p.add_argument("--train-dir", required=True, help="directory with train_*.csv files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--stacked", default=None, help="stacked_train.csv to include the probability column")
    p.add_argument("--k", type=int, default=200, help="features to keep")
    p.add_argument("--sample", type=int, default=100_000, help="selection sample size")
    p.add_argument("--learning-rate", type=float, default=0.1, help="preliminary learning rate")
    p.add_argument("--max-depth", type=int, default=3, help="preliminary tree depth")
    p.add_argument("--min-child-weight", type=float, default=1.0, help="preliminary hessian floor")
    p.add_argument("--n-estimators", type=int, default=100, help="preliminary boosting rounds")

    p = add_command("train", "fit the boosted-tree model on all training rows")
    p.add_argument("--train-dir", required=True, help="directory with train_*.csv files")
    p.add_argument("--out", required=True, help="model file path")
    p.add_argument("--stacked", default=None, help="stacked_train.csv with the probability column")
    p.add_argument("--features", default=None, help="selected_features.txt restricting the columns")
    _add_gbt_flags(p)

    p = add_command("predict", "score rows with a saved boosted-tree model")
    p.add_argument("--model", required=True, help="gbt model file")
    p.add_argument("--data-dir", required=True, help="directory with <prefix>_*.csv files")
    p.add_argument("--prefix", default="test", help="file prefix (train or test)")
    p.add_argument("--stacked", default=None, help="stacked CSV with the probability column")
    p.add_argument("--out", required=True, help="predictions CSV path")
    p.add_argument("--threshold", type=float, default=0.5, help="flag cutoff (inclusive)")

    p = add_command("evaluate", "metrics report for an Id,score CSV against labels")
    p.add_argument("--scores", required=True, help="Id,score CSV")
    p.add_argument("--labels", required=True, help="Id,label CSV")
    p.add_argument("--out", required=True, help="output directory")

    p = add_command("tune", "MCC-optimal threshold sweep")
    p.add_argument("--scores", required=True, help="Id,score CSV")
    p.add_argument("--labels", required=True, help="Id,label CSV")
    p.add_argument("--out", required=True, help="output directory")

    p = add_command("pipeline", "full two-stage workflow end to end")
    p.add_argument("--train-dir", required=True, help="directory with train_*.csv files")
    p.add_argument("--test-dir", default=None, help="directory with test_*.csv files")
    p.add_argument("--out", required=True, help="output directory")
    _add_ftrl_flags(p, prefix="ftrl-")
    _add_gbt_flags(p)
    p.add_argument("--top-k", type=int, default=200, help="features kept by selection")
    p.add_argument("--oof-folds", type=int, default=3, help="out-of-fold evaluation folds")
    p.add_argument("--selection-sample", type=int, default=100_000, help="selection sample size")
    p.add_argument("--select-learning-rate", type=float, default=0.1, help="selection-stage learning rate")
    p.add_argument("--select-max-depth", type=int, default=3, help="selection-stage tree depth")
    p.add_argument("--select-min-child-weight", type=float, default=1.0, help="selection-stage hessian floor")
    p.add_argument("--select-n-estimators", type=int, default=100, help="selection-stage boosting rounds")
    p.add_argument("--no-stacked", action="store_true", help="ablation: drop the stacked probability feature")
    p.add_argument(
        "--final-mode",
        choices=("refit", "fold-mean"),
        default="refit",
        help="final scores from a refit-on-all model or the fold average",
    )

    return parser, commands


def _apply_config_file(args: argparse.Namespace, sub: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Re-parse with file values as defaults so explicit flags win."""
    path = Path(args.config)
    if not path.exists():
        raise LinefailError(f"config file {path} does not exist")
    dests = {action.dest: action for action in sub._actions}
    defaults = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in dests:
            sub.error(f"unknown config key {key!r} at {path}:{line_no}")
        action = dests[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = value.strip().lower() in ("1", "true", "yes")
        elif action.type is not None:
            defaults[key] = action.type(value.strip())
        else:
            defaults[key] = value.strip()
    sub.set_defaults(**defaults)
    new_args = sub.parse_args(argv)
    new_args.command = args.command
    return new_args


def _echo_args(args: argparse.Namespace) -> None:
    pairs = " ".join(
        f"{key}={value}" for key, value in sorted(vars(args).items()) if key != "command"
    )
    print(f"linefail {args.command}: {pairs}", file=sys.stderr, flush=True)


def _threads(args) -> int:
    return os.cpu_count() or 1 if args.threads == -1 else max(1, args.threads)


def _read_id_value_csv(path: str, value_type=float) -> dict[int, float]:
    out: dict[int, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            cells = line.rstrip("\r\n").split(",")
            if len(cells) < 2 or not cells[0]:
                continue
            out[int(cells[0])] = value_type(cells[1])
    return out


def _aligned_scores_labels(scores_path: str, labels_path: str):
    scores = _read_id_value_csv(scores_path)
    labels = _read_id_value_csv(labels_path, value_type=lambda v: int(float(v)))
    if set(scores) != set(labels):
        raise IdMismatch(
            f"{scores_path} and {labels_path} cover different Id sets "
            f"({len(scores)} vs {len(labels)} rows)"
        )
    ids = sorted(scores)
    return (
        np.array(ids),
        np.array([scores[i] for i in ids]),
        np.array([labels[i] for i in ids]),
    )


def _load_stacked(path: Optional[str]) -> Optional[dict[int, float]]:
    if path is None:
        return None
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n").split(",")
        col = header.index(STACKED_FEATURE)
        out = {}
        for line in fh:
            cells = line.rstrip("\r\n").split(",")
            out[int(cells[0])] = float(cells[col])
    return out


def _cmd_synth(args) -> int:
    shape = synth.BOSCH_SHAPE if args.bosch_shape else dict(
        n_numeric=args.numeric, n_date=args.date, n_categorical=args.categorical
    )
    config = synth.SynthConfig(
        seed=args.seed,
        n_rows=args.rows,
        n_test_rows=args.test_rows,
        positive_rate=args.positive_rate,
        n_flow_paths=args.flow_paths,
        weekly_period=args.weekly_period,
        daily_period=args.daily_period,
        tick=args.tick,
        cat_coef=args.cat_coef,
        num_coef=args.num_coef,
        td_coef=args.td_coef,
        xor_coef=args.xor_coef,
        **shape,
    )
    data = synth.generate(config, args.out)
    print(f"wrote {data.out_dir}/{{train,test}}_*.csv and manifest.txt", file=sys.stderr)
    return 0


def _cmd_explore(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = from_directory(args.train_dir, "train")
    schemas = read_schemas(files)

    stats = explore_mod.station_stats(stream_rows(files, schemas))
    with open(out / "stations.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("station,n_features,n_parts,n_failures,error_rate\n")
        for s in stats:
            fh.write(
                f"{s.station},{s.n_features_nonzero},{s.n_parts},{s.n_failures},{_fmt(s.error_rate)}\n"
            )

    rates = explore_mod.line_error_rates(stream_rows(files, schemas))
    with open(out / "lines.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("line,error_rate\n")
        for line_id, rate in rates.items():
            fh.write(f"{line_id},{_fmt(rate)}\n")

    census = explore_mod.flow_path_census(stream_rows(files, schemas))
    ranked = sorted(census.items(), key=lambda kv: (-kv[1], kv[0]))
    with open(out / "flowpaths.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("path,count\n")
        for path, count in ranked:
            fh.write(f"{explore_mod.format_flow_path(path)},{count}\n")
    print(f"explore: {len(census)} unique flow paths", file=sys.stderr)

    report = explore_mod.analyze_periodicity(
        stream_rows(files, schemas), tick=args.tick, max_lag=args.max_lag
    )
    with open(out / "acf.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("lag,value\n")
        for lag, value in report.autocorrelation:
            fh.write(f"{_fmt(lag)},{_fmt(value)}\n")
    with open(out / "periods.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"tick={_fmt(report.tick_granularity)}\n")
        fh.write(f"dominant_period={_fmt(report.dominant_period)}\n")
        secondary = "none" if report.secondary_period is None else _fmt(report.secondary_period)
        fh.write(f"secondary_period={secondary}\n")
    print(
        f"explore: dominant period {_fmt(report.dominant_period)} ticks",
        file=sys.stderr,
    )

    if args.folds is not None:
        with open(out / "folds.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("Id,fold\n")
            for row in stream_rows(files, schemas):
                fh.write(f"{row.id},{assign_fold(row.id, args.folds, args.seed)}\n")
    return 0


def _ftrl_config(args, prefix: str = "") -> FtrlConfig:
    get = lambda name: getattr(args, f"{prefix}{name}")
    return FtrlConfig(
        alpha=get("alpha"),
        beta=get("beta"),
        l1=get("l1"),
        l2=get("l2"),
        hash_bits=get("hash_bits"),
        epochs=get("epochs"),
    )


def _gbt_config(args, seed: int) -> gbt.GbtConfig:
    return gbt.GbtConfig(
        learning_rate=args.learning_rate,
        n_estimators=args.n_estimators,
        max_depth=args.max_depth,
        min_child_weight=args.min_child_weight,
        lambda_leaf=args.lambda_leaf,
        gamma=args.gamma,
        subsample_rows=args.subsample_rows,
        subsample_cols=args.subsample_cols,
        seed=seed,
        patience=args.patience,
    )


def _collect_tokens(directory: str, prefix: str, n_buckets: int, need_labels: bool):
    files = from_directory(directory, prefix)
    schemas = read_schemas(files)
    ids, labels, tokens = [], [], []
    for row in stream_rows(files, schemas):
        if need_labels and row.label is None:
            raise MissingLabel(f"row {row.id} has no label")
        ids.append(row.id)
        labels.append(row.label)
        tokens.append(featurize(row, n_buckets))
    if not ids:
        raise EmptyData(f"no rows under {directory}")
    return np.array(ids), labels, tokens


def _cmd_stack(args) -> int:
    from .ftrl import save_model

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _ftrl_config(args)
    train_ids, labels, train_tokens = _collect_tokens(args.train_dir, "train", config.n_buckets, True)
    test_ids = test_tokens = None
    if args.test_dir is not None:
        test_ids, _, test_tokens = _collect_tokens(args.test_dir, "test", config.n_buckets, False)
    stack = stack_hashed(train_tokens, labels, test_tokens, config, args.seed)
    with open(out / "stacked_train.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"Id,fold,{STACKED_FEATURE}\n")
        for row_id, fold, prob in zip(train_ids, stack.fold_of_row, stack.train_prob):
            fh.write(f"{int(row_id)},{int(fold)},{_fmt(prob)}\n")
    if test_ids is not None:
        with open(out / "stacked_test.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"Id,{STACKED_FEATURE}\n")
            for row_id, prob in zip(test_ids, stack.test_prob):
                fh.write(f"{int(row_id)},{_fmt(prob)}\n")
    save_model(stack.models[0], out / "ftrl_fold0.model")
    save_model(stack.models[1], out / "ftrl_fold1.model")
    lines = [f"oof_log_loss={_fmt(stack.oof_log_loss)}"]
    if stack.oof_auc is not None:
        lines.append(f"oof_auc={_fmt(stack.oof_auc)}")
    (out / "stack_metrics.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"stack: oof log-loss {_fmt(stack.oof_log_loss)}", file=sys.stderr)
    return 0


def _stream_matrix(directory: str, prefix: str, columns, stacked_by_id, need_labels: bool):
    files = from_directory(directory, prefix)
    schemas = read_schemas(files)
    ids, labels = [], []
    for row in stream_rows(files, schemas):
        if need_labels and row.label is None:
            raise MissingLabel(f"row {row.id} has no label")
        ids.append(row.id)
        labels.append(row.label)
    stacked = None
    if stacked_by_id is not None:
        stacked = np.array([stacked_by_id[i] for i in ids])
    X = _materialize(files, schemas, columns, stacked)
    return np.array(ids), labels, X, schemas


def _cmd_select(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stacked_by_id = _load_stacked(args.stacked)
    files = from_directory(args.train_dir, "train")
    schemas = read_schemas(files)
    universe = feature_universe(schemas, include_stacked=stacked_by_id is not None)
    ids, labels, X, _ = _stream_matrix(args.train_dir, "train", universe, stacked_by_id, True)
    n = len(ids)
    rng = np.random.default_rng(args.seed)
    sample = np.sort(rng.choice(n, size=min(args.sample, n), replace=False))
    config = gbt.GbtConfig(
        learning_rate=args.learning_rate,
        n_estimators=args.n_estimators,
        max_depth=args.max_depth,
        min_child_weight=args.min_child_weight,
        seed=args.seed,
    )
    selected = gbt.select_top_k(
        X[sample], np.array(labels)[sample], universe, args.k, config, threads=_threads(args)
    )
    (out / "selected_features.txt").write_text("\n".join(selected) + "\n", encoding="utf-8")
    print(f"select: kept {len(selected)} features", file=sys.stderr)
    return 0


def _read_features_file(path: Optional[str], universe) -> list[str]:
    if path is None:
        return list(universe)
    names = [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    return names


def _cmd_train(args) -> int:
    stacked_by_id = _load_stacked(args.stacked)
    files = from_directory(args.train_dir, "train")
    schemas = read_schemas(files)
    universe = feature_universe(schemas, include_stacked=stacked_by_id is not None)
    columns = _read_features_file(args.features, universe)
    if STACKED_FEATURE in columns and stacked_by_id is None:
        raise UnknownFeature(
            f"feature list uses {STACKED_FEATURE}; pass --stacked with the stacked CSV"
        )
    ids, labels, X, _ = _stream_matrix(args.train_dir, "train", columns, stacked_by_id, True)
    model = gbt.fit(
        X, labels, _gbt_config(args, args.seed), feature_names=columns, threads=_threads(args)
    )
    gbt.save_ensemble(model, args.out)
    print(f"train: {len(model.trees)} trees on {len(ids)} rows -> {args.out}", file=sys.stderr)
    return 0


def _cmd_predict(args) -> int:
    model = gbt.load_ensemble(args.model)
    stacked_by_id = _load_stacked(args.stacked)
    if STACKED_FEATURE in model.feature_names and stacked_by_id is None:
        raise UnknownFeature(
            f"model uses {STACKED_FEATURE}; pass --stacked with the stacked CSV"
        )
    ids, _, X, _ = _stream_matrix(
        args.data_dir, args.prefix, model.feature_names, stacked_by_id, False
    )
    scores = model.predict_scores(X)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("Id,score,flag\n")
        for row_id, score in zip(ids, scores):
            fh.write(f"{int(row_id)},{_fmt(score)},{1 if score >= args.threshold else 0}\n")
    print(f"predict: scored {len(ids)} rows -> {args.out}", file=sys.stderr)
    return 0


def _cmd_evaluate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, scores, labels = _aligned_scores_labels(args.scores, args.labels)
    loss = metrics.log_loss(scores, labels)
    auc_value = metrics.auc(scores, labels)
    report = tune_threshold(scores, labels)
    c = metrics.confusion(scores, labels, report.best_threshold)
    lift = metrics.decile_lift(scores, labels)
    with open(out / "threshold_curve.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("threshold,mcc\n")
        for threshold, value in report.curve:
            fh.write(f"{_fmt(threshold)},{_fmt(value)}\n")
    with open(out / "decile_lift.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("decile,n_rows,n_positives,cumulative_capture\n")
        for row in lift:
            fh.write(f"{row.decile},{row.n_rows},{row.n_positives},{_fmt(row.cumulative_capture)}\n")
    lines = [
        f"rows={len(scores)}",
        f"log_loss={_fmt(loss)}",
        f"auc={_fmt(auc_value)}",
        f"best_mcc={_fmt(report.best_mcc)}",
        f"best_threshold={_fmt(report.best_threshold)}",
        f"n_flagged={report.n_flagged}",
        f"confusion_tp={c.tp}",
        f"confusion_fp={c.fp}",
        f"confusion_tn={c.tn}",
        f"confusion_fn={c.fn}",
    ]
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"evaluate: auc {_fmt(auc_value)}, best mcc {_fmt(report.best_mcc)}", file=sys.stderr)
    return 0


def _cmd_tune(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, scores, labels = _aligned_scores_labels(args.scores, args.labels)
    report = tune_threshold(scores, labels)
    with open(out / "threshold_curve.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("threshold,mcc\n")
        for threshold, value in report.curve:
            fh.write(f"{_fmt(threshold)},{_fmt(value)}\n")
    (out / "tune.txt").write_text(
        f"best_threshold={_fmt(report.best_threshold)}\n"
        f"best_mcc={_fmt(report.best_mcc)}\n"
        f"n_flagged={report.n_flagged}\n",
        encoding="utf-8",
    )
    print(
        f"tune: best mcc {_fmt(report.best_mcc)} at {_fmt(report.best_threshold)}",
        file=sys.stderr,
    )
    return 0


def _cmd_pipeline(args) -> int:
    select_config = gbt.GbtConfig(
        learning_rate=args.select_learning_rate,
        n_estimators=args.select_n_estimators,
        max_depth=args.select_max_depth,
        min_child_weight=args.select_min_child_weight,
    )
    config = PipelineConfig(
        seed=args.seed,
        ftrl=_ftrl_config(args, prefix="ftrl_"),
        gbt=_gbt_config(args, args.seed),
        select=select_config,
        top_k=args.top_k,
        oof_folds=args.oof_folds,
        selection_sample=args.selection_sample,
        include_stacked=not args.no_stacked,
        final_mode=args.final_mode,
        threads=_threads(args),
    )
    run_full_pipeline(args.train_dir, args.test_dir, args.out, config)
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "explore": _cmd_explore,
    "stack": _cmd_stack,
    "select": _cmd_select,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "tune": _cmd_tune,
    "pipeline": _cmd_pipeline,
}


def dispatch(argv: list[str]) -> int:
    parser, commands = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        if args.config is not None:
            args = _apply_config_file(args, commands[args.command], argv[1:])
        _echo_args(args)
        return _HANDLERS[args.command](args)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 1
        return code
    except LinefailError as exc:
        command = argv[0] if argv else "linefail"
        print(f"{command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
