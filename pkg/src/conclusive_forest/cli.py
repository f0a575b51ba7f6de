"""Command-line surface: train models, explain instances, audit rules,
run parameter sweeps.

Every subcommand is deterministic given its full flag set.  When ``--seed``
is absent the ``CONCLUSIVE_FOREST_SEED`` environment variable applies,
falling back to 0.  Exit codes: 0 success (audit: conclusive), 1 usage or
data errors, 2 audit found violations, 3 the audited rule's consequent
disagrees with the model.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .conclusiveness import ConsequentMismatchError, audit, report_to_dict
from .data import DataError, Dataset, feature_specs_from_data, load_csv
from .evaluation import LFGrid, RFGrid, sensitivity_sweep
from .explanation import (
    build_plot_context,
    explain_instance,
    permutation_importance,
    render,
    rule_from_dict,
)
from .model import ModelFormatError, load_model, predict_batch, serialize_model
from .quorum import TieError, default_allowed_error
from .scoring import mean_absolute_error, weighted_f1
from .trainer import TrainConfig, TrainingError, train

DEFAULT_SEED = 0
SEED_ENV_VAR = "CONCLUSIVE_FOREST_SEED"


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise SystemExit(f"{SEED_ENV_VAR} must be an integer, got {env!r}")
    return DEFAULT_SEED


def _atomic_write(path: str | Path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(payload: bytes, out: str | None) -> None:
    if out:
        _atomic_write(out, payload)
    else:
        sys.stdout.write(payload.decode())


def _comma_list(cast):
    def parse(text: str):
        return tuple(cast(part.strip()) for part in text.split(",") if part.strip())

    return parse


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _parse_depth(text: str) -> int | None:
    return None if text.strip().lower() in ("none", "") else int(text)


def _parse_max_features(text: str) -> float | str:
    if text in ("sqrt", "log2", "all"):
        return text
    return float(text)


def _instance_from_args(args, dataset: Dataset | None, n_features: int) -> np.ndarray:
    if args.values is not None:
        values = [float(v) for v in args.values.split(",")]
        if len(values) != n_features:
            raise SystemExit(
                f"--values supplied {len(values)} numbers, model expects {n_features}"
            )
        return np.asarray(values, dtype=np.float64)
    if args.row is None:
        raise SystemExit("select an instance with --row or --values")
    if dataset is None:
        raise SystemExit("--row needs --data")
    if not (0 <= args.row < dataset.X.shape[0]):
        raise SystemExit(f"--row {args.row} outside 0..{dataset.X.shape[0] - 1}")
    return dataset.X[args.row]


def _check_columns(dataset: Dataset, model) -> None:
    expected = [f.name for f in model.features]
    if dataset.feature_names != expected:
        raise SystemExit(
            "dataset columns do not match the model's features\n"
            f"  dataset: {dataset.feature_names}\n  model:   {expected}"
        )


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    dataset = load_csv(args.data, target=args.target)
    seed = _resolve_seed(args.seed)
    n = dataset.X.shape[0]
    order = list(range(n))
    random.Random(seed).shuffle(order)
    cut = max(1, int(0.75 * n))
    train_ids, test_ids = order[:cut], order[cut:]

    specs = feature_specs_from_data(
        dataset.feature_names, dataset.X[train_ids]
    )
    config = TrainConfig(
        n_estimators=args.estimators,
        max_depth=args.max_depth,
        max_features=args.max_features,
        min_samples_leaf=args.min_samples_leaf,
        bootstrap=args.bootstrap,
        seed=seed,
    )
    y = dataset.y
    assert y is not None
    model = train(
        dataset.X[train_ids], [y[i] for i in train_ids], args.task, config, features=specs
    )
    _atomic_write(args.out, serialize_model(model).encode())

    if test_ids:
        held_X = dataset.X[test_ids]
        held_y = [y[i] for i in test_ids]
        out = predict_batch(model, held_X)
        if model.is_classification:
            index = {c: i for i, c in enumerate(model.classes)}
            y_idx = np.array([index.get(v, -1) for v in held_y])
            score = weighted_f1(y_idx, np.argmax(out, axis=1), model.n_classes)
            print(f"held-out weighted F1: {score:.4f} ({len(test_ids)} rows)")
        else:
            score = mean_absolute_error(np.asarray(held_y, float), out)
            print(f"held-out MAE: {score:.4f} ({len(test_ids)} rows)")
    print(f"model written to {args.out}")
    return 0


def cmd_explain(args) -> int:
    model = load_model(Path(args.model).read_bytes())
    if args.task is not None and args.task != model.task:
        compatible = {"binary", "multiclass"}
        if not (
            args.task in compatible
            and model.task in compatible
            and (args.task != "binary" or model.n_classes == 2)
        ):
            raise SystemExit(
                f"--task {args.task} incompatible with a {model.task} model"
            )
    dataset = load_csv(args.data, target=args.target) if args.data else None
    if dataset is not None:
        _check_columns(dataset, model)
    instance = _instance_from_args(args, dataset, model.n_features)
    seed = _resolve_seed(args.seed)

    allowed_error = args.allowed_error
    if not model.is_classification and allowed_error is None:
        if dataset is None or dataset.y is None:
            raise SystemExit(
                "regression explanations need --allowed-error, or --data with "
                "--target to default to the model's MAE"
            )
        budget = default_allowed_error(
            model, dataset.X, np.asarray(dataset.y, dtype=np.float64)
        )
        allowed_error = budget.allowed_error
        print(f"allowed_error defaulted to model MAE: {allowed_error!r}", file=sys.stderr)

    importances = {}
    if dataset is not None and dataset.y is not None:
        importances = permutation_importance(
            model, dataset.X, dataset.y, seed=seed
        )

    method = "none" if args.no_reduction else args.method
    rule, outcome = explain_instance(
        model,
        instance,
        method=method,
        miner=args.miner,
        min_support=args.min_support,
        max_len=args.max_len,
        k=args.k,
        seed=seed,
        allowed_error=allowed_error,
        importances=importances,
    )

    plot_context = None
    if args.format == "plotdata":
        baseline_rule, _ = explain_instance(
            model,
            instance,
            method="none",
            allowed_error=allowed_error,
            importances=importances,
        )
        plot_context = build_plot_context(
            model,
            instance,
            dataset.X if dataset is not None else None,
            baseline_rule,
        )
    _emit(render(rule, args.format, plot_context=plot_context), args.out)
    return 0


def cmd_audit(args) -> int:
    model = load_model(Path(args.model).read_bytes())
    dataset = load_csv(args.data, target=args.target) if args.data else None
    if dataset is not None:
        _check_columns(dataset, model)
    instance = _instance_from_args(args, dataset, model.n_features)
    rule_doc = json.loads(Path(args.rule).read_text())
    rule = rule_from_dict(model, rule_doc)
    try:
        report = audit(model, instance, rule)
    except ConsequentMismatchError as exc:
        print(f"consequent mismatch: {exc}", file=sys.stderr)
        return 3
    payload = (json.dumps(report_to_dict(report), indent=2) + "\n").encode()
    if args.out:
        _atomic_write(args.out, payload)
    print(
        f"verdict: {report.verdict} "
        f"({len(report.violations)} violation(s), {report.probes_evaluated} probes)"
    )
    for v in report.violations[:10]:
        name = model.features[v.feature_id].name
        print(f"  {name} = {v.value!r} -> {v.new_prediction!r}")
    if len(report.violations) > 10:
        print(f"  ... and {len(report.violations) - 10} more")
    return 0 if report.verdict == "conclusive" else 2


def cmd_sweep(args) -> int:
    dataset = load_csv(args.data, target=args.target)
    assert dataset.y is not None
    specs = feature_specs_from_data(dataset.feature_names, dataset.X)
    rf_grid = RFGrid(
        n_estimators=args.estimators,
        max_depth=args.max_depths,
        max_features=args.max_features_grid,
        min_samples_leaf=args.min_samples_leaf_grid,
        bootstrap=args.bootstrap_grid,
    )
    lf_grid = LFGrid(
        methods=args.methods,
        miners=args.miners,
        min_supports=args.min_supports,
        ks=args.ks,
        allowed_error_fracs=args.allowed_error_fracs,
    )
    seeds = args.seeds if args.seeds else (_resolve_seed(args.seed),)
    result = sensitivity_sweep(
        dataset.X,
        dataset.y,
        args.task,
        rf_grid,
        lf_grid,
        seeds,
        features=specs,
        n_instances=args.instances,
    )
    _atomic_write(args.out, result.to_csv().encode())
    print(f"{len(result.rows)} rows written to {args.out}")
    for cell, reason in result.skipped:
        print(f"skipped {cell['method']}: {reason}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conclusive-forest",
        description="Conclusive single-rule explanations for random forests",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a forest and save it")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--target", default="target")
    p_train.add_argument(
        "--task", required=True, choices=("binary", "multiclass", "regression")
    )
    p_train.add_argument("--estimators", type=int, default=100)
    p_train.add_argument("--max-depth", type=_parse_depth, default=None)
    p_train.add_argument("--max-features", type=_parse_max_features, default="all")
    p_train.add_argument("--min-samples-leaf", type=int, default=1)
    p_train.add_argument("--bootstrap", type=_parse_bool, default=True)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--out", required=True)
    p_train.set_defaults(func=cmd_train)

    p_explain = sub.add_parser("explain", help="explain one instance")
    p_explain.add_argument("--model", required=True)
    p_explain.add_argument("--data")
    p_explain.add_argument("--target")
    p_explain.add_argument("--row", type=int)
    p_explain.add_argument("--values", help="comma-separated feature values")
    p_explain.add_argument(
        "--task", choices=("binary", "multiclass", "regression"), default=None
    )
    p_explain.add_argument("--method", default=None)
    p_explain.add_argument("--miner", choices=("apriori", "fpgrowth"), default="apriori")
    p_explain.add_argument("--min-support", type=float, default=0.1)
    p_explain.add_argument("--max-len", type=int, default=4)
    p_explain.add_argument("--k", type=int, default=5)
    p_explain.add_argument("--allowed-error", type=float, default=None)
    p_explain.add_argument("--seed", type=int, default=None)
    p_explain.add_argument(
        "--format", choices=("text", "json", "plotdata"), default="text"
    )
    p_explain.add_argument("--no-reduction", action="store_true")
    p_explain.add_argument("--out")
    p_explain.set_defaults(func=cmd_explain)

    p_audit = sub.add_parser("audit", help="audit a rule for conclusiveness")
    p_audit.add_argument("--model", required=True)
    p_audit.add_argument("--data")
    p_audit.add_argument("--target")
    p_audit.add_argument("--row", type=int)
    p_audit.add_argument("--values")
    p_audit.add_argument("--rule", required=True)
    p_audit.add_argument("--out")
    p_audit.set_defaults(func=cmd_audit)

    p_sweep = sub.add_parser("sweep", help="parameter sensitivity sweep")
    p_sweep.add_argument("--data", required=True)
    p_sweep.add_argument("--target", default="target")
    p_sweep.add_argument(
        "--task", required=True, choices=("binary", "multiclass", "regression")
    )
    p_sweep.add_argument("--estimators", type=_comma_list(int), default=(100,))
    p_sweep.add_argument("--max-depths", type=_comma_list(_parse_depth), default=(None,))
    p_sweep.add_argument(
        "--max-features-grid", type=_comma_list(_parse_max_features), default=("all",)
    )
    p_sweep.add_argument(
        "--min-samples-leaf-grid", type=_comma_list(int), default=(1,)
    )
    p_sweep.add_argument(
        "--bootstrap-grid", type=_comma_list(_parse_bool), default=(True,)
    )
    p_sweep.add_argument("--methods", type=_comma_list(str), default=("123",))
    p_sweep.add_argument("--miners", type=_comma_list(str), default=("apriori",))
    p_sweep.add_argument("--min-supports", type=_comma_list(float), default=(0.1,))
    p_sweep.add_argument("--ks", type=_comma_list(int), default=(5,))
    p_sweep.add_argument(
        "--allowed-error-fracs", type=_comma_list(float), default=(1.0,)
    )
    p_sweep.add_argument("--seeds", type=_comma_list(int), default=())
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--instances", type=int, default=10)
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, ModelFormatError, TrainingError, TieError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
