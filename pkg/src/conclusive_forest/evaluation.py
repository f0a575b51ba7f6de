"""Rule metrics and the parameter-sensitivity sweep harness.

``precision`` is fidelity by default: the rule's consequent is compared
against the model's prediction on covered rows, because that is the promise
a rule about a model can actually make.  Ground-truth comparison is
available behind ``against="target"``.

Reduction ratios compare a reduced explanation against the unreduced
explanation of the same instance: ``fr = 1 - conditions/baseline`` counts
rule conditions, ``pr`` counts retained paths.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field
from itertools import product
from typing import Mapping, Sequence

import numpy as np

from .explanation import (
    CategoricalEquality,
    ExplanationRule,
    FeatureRange,
    explain_instance,
)
from .model import FeatureSpec, ForestModel, predict_batch
from .quorum import TieError, default_allowed_error
from .reducers import ReductionOutcome
from .trainer import TrainConfig, train


class ZeroCoverageError(RuntimeError):
    """No dataset row satisfies the rule; precision is undefined."""


def rule_length(rule: ExplanationRule) -> int:
    """Number of conditions (ranges plus equalities)."""
    return len(rule.conditions)


def satisfaction_mask(
    rule: ExplanationRule, X: Sequence[Sequence[float]], features: Sequence[FeatureSpec]
) -> np.ndarray:
    """Rows satisfying every condition; ranges are inclusive on both sides,
    categorical equalities exact."""
    mat = np.asarray(X, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] != len(features):
        raise ValueError("dataset columns do not match the feature table")
    member_col = {
        (f.group, f.member_value): f.id
        for f in features
        if f.kind == "one_hot_member"
    }
    mask = np.ones(mat.shape[0], dtype=bool)
    for cond in rule.conditions:
        if isinstance(cond, FeatureRange):
            col = mat[:, cond.feature_id]
            mask &= (col >= cond.lower) & (col <= cond.upper)
        else:
            key = (cond.group, cond.value)
            if key not in member_col:
                raise ValueError(
                    f"dataset has no column for {cond.group} = {cond.value}"
                )
            mask &= mat[:, member_col[key]] == 1.0
    return mask


def coverage(
    rule: ExplanationRule, X: Sequence[Sequence[float]], features: Sequence[FeatureSpec]
) -> float:
    mask = satisfaction_mask(rule, X, features)
    return float(mask.sum()) / mask.size


def precision(
    rule: ExplanationRule,
    X: Sequence[Sequence[float]],
    features: Sequence[FeatureSpec],
    model: ForestModel,
    *,
    against: str = "model",
    y: Sequence | None = None,
) -> float:
    """Classification: fraction of covered rows predicting the consequent.
    Regression: mean absolute distance of covered rows' predictions from
    the consequent."""
    mask = satisfaction_mask(rule, X, features)
    if not mask.any():
        raise ZeroCoverageError("rule covers no dataset row")
    mat = np.asarray(X, dtype=np.float64)[mask]
    if against == "model":
        out = predict_batch(model, mat)
        if model.is_classification:
            labels = np.argmax(out, axis=1)
            target_idx = model.classes.index(rule.consequent_label)  # type: ignore[union-attr]
            return float(np.mean(labels == target_idx))
        return float(np.mean(np.abs(out - rule.consequent_value)))
    if against == "target":
        if y is None:
            raise ValueError("ground-truth precision needs targets")
        covered_y = [v for v, keep in zip(y, mask) if keep]
        if model.is_classification:
            return float(
                np.mean([str(v) == rule.consequent_label for v in covered_y])
            )
        return float(
            np.mean(np.abs(np.asarray(covered_y, float) - rule.consequent_value))
        )
    raise ValueError(f"unknown precision mode {against!r}")


def reduction_ratios(
    rule: ExplanationRule,
    outcome: ReductionOutcome,
    baseline_rule: ExplanationRule,
    baseline_outcome: ReductionOutcome,
) -> tuple[float, float]:
    """(feature reduction, path reduction) against the unreduced run."""
    base_len = rule_length(baseline_rule)
    fr = 0.0 if base_len == 0 else 1.0 - rule_length(rule) / base_len
    base_paths = len(baseline_outcome.retained_paths)
    pr = 0.0 if base_paths == 0 else 1.0 - len(outcome.retained_paths) / base_paths
    return fr, pr


# ---------------------------------------------------------------------------
# sensitivity sweep


@dataclass(frozen=True)
class RFGrid:
    n_estimators: tuple[int, ...] = (100,)
    max_depth: tuple[int | None, ...] = (None,)
    max_features: tuple[float | str, ...] = ("all",)
    min_samples_leaf: tuple[int, ...] = (1,)
    bootstrap: tuple[bool, ...] = (True,)

    def cells(self):
        return product(
            self.n_estimators,
            self.max_depth,
            self.max_features,
            self.min_samples_leaf,
            self.bootstrap,
        )


@dataclass(frozen=True)
class LFGrid:
    methods: tuple[str, ...] = ("123",)
    miners: tuple[str, ...] = ("apriori",)
    min_supports: tuple[float, ...] = (0.1,)
    ks: tuple[int, ...] = (5,)
    allowed_error_fracs: tuple[float, ...] = (1.0,)

    def cells(self):
        return product(
            self.methods, self.miners, self.min_supports, self.ks, self.allowed_error_fracs
        )


CSV_COLUMNS = (
    "task",
    "n_estimators",
    "max_depth",
    "max_features",
    "min_samples_leaf",
    "bootstrap",
    "method",
    "miner",
    "min_support",
    "k",
    "allowed_error_frac",
    "allowed_error",
    "seed",
    "n_instances",
    "n_explained",
    "rule_length_mean",
    "rule_length_std",
    "coverage_mean",
    "coverage_std",
    "precision_or_mae_mean",
    "precision_or_mae_std",
    "fr_mean",
    "fr_std",
    "pr_mean",
    "pr_std",
)


@dataclass
class SweepRow:
    config: dict
    per_instance: dict[str, list[float]] = field(default_factory=dict)

    def csv_record(self) -> list:
        return [self.config.get(c, "") for c in CSV_COLUMNS]


@dataclass
class SweepResult:
    rows: list[SweepRow]
    skipped: list[tuple[dict, str]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow(row.csv_record())
        return buf.getvalue()


def _aggregate(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def sensitivity_sweep(
    X: Sequence[Sequence[float]],
    y: Sequence,
    task: str,
    rf_grid: RFGrid,
    lf_grid: LFGrid,
    seeds: Sequence[int],
    *,
    features: Sequence[FeatureSpec] | None = None,
    n_instances: int = 10,
) -> SweepResult:
    """Cross-product run over forest and explainer parameters.

    Infeasible combinations (clustering on a regression task and other
    method/task mismatches) are skipped with a recorded reason.  Output rows
    appear in deterministic grid order.
    """
    mat = np.asarray(X, dtype=np.float64)
    rows: list[SweepRow] = []
    skipped: list[tuple[dict, str]] = []
    classification = task != "regression"

    for seed in seeds:
        for rf_cell in rf_grid.cells():
            n_estimators, max_depth, max_features, min_leaf, bootstrap = rf_cell
            config = TrainConfig(
                n_estimators=n_estimators,
                max_depth=max_depth,
                max_features=max_features,
                min_samples_leaf=min_leaf,
                bootstrap=bootstrap,
                seed=seed,
            )
            model = train(mat, y, task, config, features=features)
            if task == "regression":
                base_mae = default_allowed_error(model, mat, np.asarray(y, float))
            rng = random.Random(seed)
            row_ids = sorted(rng.sample(range(mat.shape[0]), min(n_instances, mat.shape[0])))

            for lf_cell in lf_grid.cells():
                method, miner, min_support, k, frac = lf_cell
                cell_cfg = {
                    "task": task,
                    "n_estimators": n_estimators,
                    "max_depth": "" if max_depth is None else max_depth,
                    "max_features": max_features,
                    "min_samples_leaf": min_leaf,
                    "bootstrap": bootstrap,
                    "method": method,
                    "miner": miner,
                    "min_support": min_support,
                    "k": k,
                    "seed": seed,
                    "n_instances": len(row_ids),
                }
                if classification and method.lower() not in (
                    "1", "2", "3", "12", "13", "23", "123", "none",
                ):
                    skipped.append((cell_cfg, f"method {method!r} needs a regression task"))
                    continue
                if not classification and method.lower() not in ("ar+rs", "dsi", "dso", "none"):
                    skipped.append((cell_cfg, f"method {method!r} needs a classification task"))
                    continue
                allowed = None
                if task == "regression":
                    allowed = frac * base_mae.allowed_error
                    cell_cfg["allowed_error_frac"] = frac
                    cell_cfg["allowed_error"] = allowed
                else:
                    cell_cfg["allowed_error_frac"] = ""
                    cell_cfg["allowed_error"] = ""

                per = {key: [] for key in ("rule_length", "coverage", "precision", "fr", "pr")}
                explained = 0
                for row_id in row_ids:
                    instance = mat[row_id]
                    try:
                        rule, outcome = explain_instance(
                            model,
                            instance,
                            method=method,
                            miner=miner,
                            min_support=min_support,
                            k=k,
                            seed=seed,
                            allowed_error=allowed,
                        )
                        base_rule, base_outcome = explain_instance(
                            model, instance, method="none", allowed_error=allowed
                        )
                    except TieError:
                        continue
                    explained += 1
                    per["rule_length"].append(rule_length(rule))
                    per["coverage"].append(coverage(rule, mat, model.features))
                    per["precision"].append(
                        precision(rule, mat, model.features, model)
                    )
                    fr, pr = reduction_ratios(rule, outcome, base_rule, base_outcome)
                    per["fr"].append(fr)
                    per["pr"].append(pr)

                cell_cfg["n_explained"] = explained
                for key, csv_key in (
                    ("rule_length", "rule_length"),
                    ("coverage", "coverage"),
                    ("precision", "precision_or_mae"),
                    ("fr", "fr"),
                    ("pr", "pr"),
                ):
                    mean, std = _aggregate(per[key])
                    cell_cfg[f"{csv_key}_mean"] = mean
                    cell_cfg[f"{csv_key}_std"] = std
                rows.append(SweepRow(config=cell_cfg, per_instance=per))
    return SweepResult(rows=rows, skipped=skipped)
