"""Command-line entry point: ``lht {train,predict,evaluate,importance,bench}``."""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import model_io
from .dataset import Dataset, DatasetError, load_csv, load_feature_csv
from .experiment import bootstrap_test, format_accuracy, repeated_holdout
from .explain import extract_node_weights, importance_summary
from .forest import ForestParams, predict_batch, train_forest
from .tree import TreeParams, tree_stats

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class ConfigError(ValueError):
    pass


def _add_data_flags(p, test=False):
    p.add_argument("--data", required=True, help="training CSV (header row expected)")
    if test:
        p.add_argument("--test", help="fixed test CSV; switches evaluation to bootstrap resampling")
    p.add_argument("--label-col", default=None,
                   help="label column name or 0-based index (default: last column)")
    p.add_argument("--no-header", action="store_true", help="CSV files have no header row")


def _add_model_flags(p):
    p.add_argument("--alpha", type=float, default=0.0, help="variance filter threshold")
    p.add_argument("--beta-prime", type=float, default=0.0, help="weight selection ceiling")
    p.add_argument("--gamma", type=int, default=2, help="minimum pure-side size")
    p.add_argument("--min-samples", type=int, default=2)
    p.add_argument("--max-depth", type=int, default=50)
    p.add_argument("--trees-per-class", type=int, default=1)
    p.add_argument("--forest-rate", type=float, default=1.0, help="row fraction per tree")
    p.add_argument("--feature-fraction", type=float, default=None, help="feature fraction per tree")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-normalize", action="store_true", help="skip min-max scaling")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lht", description="Learning hyperplane tree classifier")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a forest and write a model file")
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--model", required=True, help="output model path")

    p = sub.add_parser("predict", help="score a CSV with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="rows to score; a label column is dropped if present")
    p.add_argument("--label-col", default=None)
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--out", required=True, help="predictions CSV")

    for name, text in (("evaluate", "repeated hold-out or bootstrap accuracy"),
                       ("bench", "training time and accuracy")):
        p = sub.add_parser(name, help=text)
        _add_data_flags(p, test=True)
        _add_model_flags(p)
        p.add_argument("--runs", type=int, default=10)
        p.add_argument("--out", default=None, help="also write the report here")

    p = sub.add_parser("importance", help="export per-branch weights and a feature summary")
    p.add_argument("--model", default=None, help="saved model; otherwise train from --data")
    p.add_argument("--data", default=None)
    p.add_argument("--label-col", default=None)
    p.add_argument("--no-header", action="store_true")
    _add_model_flags(p)
    p.add_argument("--weighting", choices=("uniform", "by-node-size"), default="uniform")
    p.add_argument("--out", required=True, help="output directory for the two CSV files")
    return parser


def forest_params(args) -> ForestParams:
    """Validate hyperparameters; raises :class:`ConfigError` before any file is touched."""
    if getattr(args, "runs", 1) < 1:
        raise ConfigError("runs must be a positive integer")
    try:
        base = TreeParams(alpha=args.alpha, beta=args.beta_prime, gamma=args.gamma,
                          min_samples=args.min_samples, max_depth=args.max_depth)
        return ForestParams(
            trees_per_class=args.trees_per_class,
            beta_prime=args.beta_prime,
            forest_rate=args.forest_rate,
            base=base,
            seed=args.seed,
            feature_fraction=args.feature_fraction,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _label_col(args):
    if args.label_col is None:
        return -1
    try:
        return int(args.label_col)
    except ValueError:
        return args.label_col


def _write_atomic(path, text: str) -> None:
    # partial files never appear under the final name
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v: float) -> str:
    return repr(float(v))


def cmd_train(args) -> int:
    params = forest_params(args)
    data = load_csv(args.data, _label_col(args), header=not args.no_header)
    start = time.perf_counter()
    forest = train_forest(data, params, normalize=not args.no_normalize)
    elapsed = time.perf_counter() - start
    _write_atomic(args.model, model_io.dumps(forest))
    nodes = [sum(tree_stats(t).node_count for t in per_class) for per_class in forest.trees]
    print(f"trained k={forest.k} t={params.trees_per_class} nodes_per_class={nodes} "
          f"time={elapsed:.3f}s -> {args.model}")
    return EXIT_OK


def _prediction_rows(forest, X):
    pred = predict_batch(forest, X)
    for r in range(len(pred)):
        yield [r, forest.class_labels[pred.predicted[r]]] + [_fmt(s) for s in pred.scores[r]]


def cmd_predict(args) -> int:
    forest = model_io.load(args.model)
    header = not args.no_header
    if args.label_col is not None:
        X = load_feature_csv(args.data, forest.m, _label_col(args), header=header)
    else:
        try:
            X = load_feature_csv(args.data, forest.m, None, header=header)
        except DatasetError:
            # fall back to a trailing label column
            X = load_feature_csv(args.data, forest.m, -1, header=header)
    head = ["row_index", "predicted_class"] + [f"score_{lab}" for lab in forest.class_labels]
    _write_atomic(args.out, _csv_text(head, _prediction_rows(forest, X)))
    print(f"wrote {X.shape[0]} predictions -> {args.out}")
    return EXIT_OK


def _align_labels(test: Dataset, train: Dataset, path) -> Dataset:
    # re-encode test labels with the training mapping
    ids = {lab: c for c, lab in enumerate(train.class_labels)}
    unknown = sorted(set(test.class_labels) - set(ids))
    if unknown:
        raise DatasetError(f"{path}: labels {unknown} do not occur in the training data")
    remap = np.array([ids[lab] for lab in test.class_labels])
    return Dataset(test.features, remap[test.labels], train.k, train.feature_names, train.class_labels)


def _run_protocol(args, params):
    header = not args.no_header
    data = load_csv(args.data, _label_col(args), header=header)
    if args.test:
        test = load_csv(args.test, _label_col(args), header=header)
        if test.m != data.m:
            raise DatasetError(f"{args.test}: {test.m} features, training data has {data.m}")
        test = _align_labels(test, data, args.test)
        return bootstrap_test(data, test, params, args.runs, normalize=not args.no_normalize)
    return repeated_holdout(data, params, args.runs, normalize=not args.no_normalize)


def _report(args, lines) -> None:
    text = "\n".join(lines) + "\n"
    if args.out:
        _write_atomic(args.out, text)
    sys.stdout.write(text)


def cmd_evaluate(args) -> int:
    params = forest_params(args)
    records = _run_protocol(args, params)
    accs = [r.accuracy for r in records]
    lines = [f"accuracy: {format_accuracy(accs)}"]
    if len(accs) > 1:
        lines.append("runs: " + " ".join(f"{100 * a:.1f}" for a in accs))
    _report(args, lines)
    return EXIT_OK


def cmd_bench(args) -> int:
    params = forest_params(args)
    records = _run_protocol(args, params)
    # with a fixed test file the forest is trained once
    trained = records[:1] if args.test else records
    total = [r.train_seconds for r in trained]
    longest = max(max(r.tree_seconds) for r in trained)
    lines = [
        f"train_time_total: {np.mean(total):.4f}s (max tree {longest:.4f}s)",
        f"accuracy: {format_accuracy([r.accuracy for r in records])}",
    ]
    _report(args, lines)
    return EXIT_OK


def cmd_importance(args) -> int:
    if args.model is None:
        params = forest_params(args)
        if args.data is None:
            raise ConfigError("importance needs --model or --data")
        data = load_csv(args.data, _label_col(args), header=not args.no_header)
        forest = train_forest(data, params, normalize=not args.no_normalize)
    else:
        forest = model_io.load(args.model)
    records = extract_node_weights(forest)
    summary = importance_summary(records, args.weighting, m=forest.m)
    names = forest.feature_names or tuple(f"f{i}" for i in range(forest.m))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    head = ["class_id", "class_label", "tree_index", "node_path", "threshold", "chosen_case",
            "left_rows", "right_rows"] + [f"w_{n}" for n in names]
    rows = ([r.class_id, forest.class_labels[r.class_id], r.tree_index, r.node_path or "root",
             _fmt(r.threshold), r.chosen_case, *r.subtree_sizes, *(_fmt(w) for w in r.weights)]
            for r in records)
    _write_atomic(out / "node_weights.csv", _csv_text(head, rows))
    _write_atomic(out / "importance_summary.csv", _csv_text(
        ["feature_index", "feature_name", "importance"],
        ([i, names[i], _fmt(v)] for i, v in enumerate(summary.importance))))
    note = " (no branches; summary is all zero)" if summary.empty else ""
    print(f"wrote {len(records)} node records -> {out}{note}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "importance": cmd_importance,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"lht {args.command}: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        msg = f"file not found: {exc.filename}" if exc.filename else str(exc)
        print(f"lht {args.command}: {msg}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as exc:
        print(f"lht {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
