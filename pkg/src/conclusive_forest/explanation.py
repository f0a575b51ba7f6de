"""Turn a reduction outcome into a single explanation rule.

Per retained numeric feature the rule carries the intersection of all
retained paths' intervals; sides no path closes fall back to the feature's
training domain so rules always print two-sided ranges.  A lower bound that
came from a path is exclusive (the underlying condition is a strict ``>``),
which matters to the auditor; the rendered text keeps the conventional
``a <= f <= b`` display form.

One-hot encoded categoricals appear either as a ``group = value`` equality
(the instance's own column is in the retained paths) or as a list of
alternative values that could change the prediction (other columns of the
group are in the retained paths).  Condition order is descending permutation
importance.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import (
    FeatureSpec,
    ForestModel,
    one_hot_groups,
    path_interval,
    predict,
    predict_batch,
    validate_instance,
)
from .reducers import ReductionOutcome, run_pipeline
from .scoring import mean_absolute_error, weighted_f1

RULE_FORMAT_VERSION = "1"

PATH_BOUND = "path_bound"
DOMAIN_BOUND = "domain_bound"


class IntersectionError(RuntimeError):
    """Internal consistency failure: retained paths exclude the instance."""


class OneHotError(ValueError):
    """Instance does not one-hot encode its categorical groups."""


@dataclass(frozen=True)
class FeatureRange:
    feature_id: int
    feature_name: str
    lower: float
    upper: float
    lower_origin: str
    upper_origin: str

    @property
    def lower_exclusive(self) -> bool:
        # Path-imposed lower bounds come from strict ">" conditions.
        return self.lower_origin == PATH_BOUND


@dataclass(frozen=True)
class CategoricalEquality:
    group: str
    value: str


@dataclass(frozen=True)
class ExplanationRule:
    task: str
    conditions: tuple[FeatureRange | CategoricalEquality, ...]
    alternatives: Mapping[str, tuple[str, ...]]
    consequent_label: str | None = None
    consequent_value: float | None = None
    error_bound: float | None = None
    trace: Mapping[str, object] = field(default_factory=dict)

    @property
    def rule_id(self) -> str:
        payload = json.dumps(rule_to_dict(self), sort_keys=True)
        return hashlib.sha1(payload.encode()).hexdigest()[:12]


def intersect_ranges(
    outcome: ReductionOutcome,
    instance: Sequence[float],
    features: Sequence[FeatureSpec],
) -> list[FeatureRange]:
    """Per retained numeric feature, the overlap of all retained paths'
    intervals; always contains the instance value."""
    x = np.asarray(instance, dtype=np.float64)
    ranges = []
    for fid in sorted(outcome.retained_features):
        spec = features[fid]
        if spec.kind != "numeric":
            continue
        lower = -math.inf
        upper = math.inf
        for path in outcome.retained_paths:
            interval = path_interval(path, fid)
            if interval is None:
                continue
            lower = max(lower, interval[0])
            upper = min(upper, interval[1])
        if lower == -math.inf:
            lower, lower_origin = spec.domain_min, DOMAIN_BOUND
        else:
            lower_origin = PATH_BOUND
        if upper == math.inf:
            upper, upper_origin = spec.domain_max, DOMAIN_BOUND
        else:
            upper_origin = PATH_BOUND
        value = float(x[fid])
        if not (lower <= value <= upper):
            raise IntersectionError(
                f"feature {spec.name!r}: instance value {value} outside "
                f"intersection [{lower}, {upper}]"
            )
        ranges.append(
            FeatureRange(
                feature_id=fid,
                feature_name=spec.name,
                lower=float(lower),
                upper=float(upper),
                lower_origin=lower_origin,
                upper_origin=upper_origin,
            )
        )
    return ranges


def resolve_categoricals(
    outcome: ReductionOutcome,
    instance: Sequence[float],
    features: Sequence[FeatureSpec],
) -> tuple[list[CategoricalEquality], dict[str, tuple[str, ...]]]:
    """Equalities for groups whose instance-hot column is retained, plus
    alternative values whose zero-valued columns are retained."""
    x = np.asarray(instance, dtype=np.float64)
    equalities = []
    alternatives: dict[str, tuple[str, ...]] = {}
    for group, members in one_hot_groups(features).items():
        values = [float(x[m.id]) for m in members]
        hot = [m for m, v in zip(members, values) if v == 1.0]
        if len(hot) != 1 or any(v not in (0.0, 1.0) for v in values):
            raise OneHotError(
                f"group {group!r}: instance must set exactly one member to 1"
            )
        current = hot[0]
        if current.id in outcome.retained_features:
            equalities.append(CategoricalEquality(group, current.member_value))  # type: ignore[arg-type]
        alts = tuple(
            m.member_value  # type: ignore[misc]
            for m in members
            if m.id != current.id and m.id in outcome.retained_features
        )
        if alts:
            alternatives[group] = alts
    return equalities, alternatives


def permutation_importance(
    model: ForestModel,
    X: Sequence[Sequence[float]],
    y: Sequence,
    *,
    repeats: int = 5,
    seed: int = 0,
) -> dict[str, float]:
    """Mean score drop (weighted F1) or error increase (MAE) over seeded
    column shuffles.  One-hot groups are shuffled as a unit and scored under
    the group name; numeric features under their own name."""
    mat = np.asarray(X, dtype=np.float64)
    if mat.size == 0:
        raise ValueError("empty validation set")
    units: list[tuple[str, list[int]]] = []
    grouped: set[int] = set()
    for group, members in one_hot_groups(model.features).items():
        ids = [m.id for m in members]
        units.append((group, ids))
        grouped.update(ids)
    for spec in model.features:
        if spec.id not in grouped:
            units.append((spec.name, [spec.id]))
    units.sort(key=lambda u: u[1][0])

    if model.is_classification:
        index = {c: i for i, c in enumerate(model.classes)}  # type: ignore[union-attr]
        y_idx = np.array([index[str(v)] for v in y], dtype=np.int64)

        def score(m: np.ndarray) -> float:
            pred = np.argmax(predict_batch(model, m), axis=1)
            return weighted_f1(y_idx, pred, model.n_classes)

    else:
        y_val = np.asarray(y, dtype=np.float64)

        def score(m: np.ndarray) -> float:
            return mean_absolute_error(y_val, predict_batch(model, m))

    base = score(mat)
    out: dict[str, float] = {}
    for u, (name, cols) in enumerate(units):
        deltas = []
        for r in range(repeats):
            rng = np.random.default_rng([seed, u, r])
            perm = rng.permutation(mat.shape[0])
            shuffled = mat.copy()
            shuffled[:, cols] = mat[perm][:, cols]
            s = score(shuffled)
            deltas.append(base - s if model.is_classification else s - base)
        out[name] = float(np.mean(deltas))
    return out


def _condition_sort_key(
    cond: FeatureRange | CategoricalEquality,
    importances: Mapping[str, float],
    group_min_id: Mapping[str, int],
) -> tuple[float, int]:
    if isinstance(cond, FeatureRange):
        return (-importances.get(cond.feature_name, 0.0), cond.feature_id)
    return (-importances.get(cond.group, 0.0), group_min_id[cond.group])


def compose_rule(
    outcome: ReductionOutcome,
    instance: Sequence[float],
    model: ForestModel,
    importances: Mapping[str, float] | None = None,
) -> ExplanationRule:
    """Assemble the final rule: ranges + equalities ordered by importance
    (ties on the lowest feature id), consequent = model prediction."""
    x = validate_instance(model, instance)
    pred = predict(model, x)
    ranges = intersect_ranges(outcome, x, model.features)
    equalities, alternatives = resolve_categoricals(outcome, x, model.features)
    conditions: list[FeatureRange | CategoricalEquality] = [*ranges, *equalities]
    importances = importances or {}
    group_min_id = {
        group: min(m.id for m in members)
        for group, members in one_hot_groups(model.features).items()
    }
    conditions.sort(key=lambda c: _condition_sort_key(c, importances, group_min_id))
    trace = {
        "methods": list(outcome.method_trace),
        "retained_paths": len(outcome.retained_paths),
        "total_paths": len(model.trees),
    }
    if model.is_classification:
        return ExplanationRule(
            task=model.task,
            conditions=tuple(conditions),
            alternatives=alternatives,
            consequent_label=model.classes[pred.class_index],  # type: ignore[index]
            trace=trace,
        )
    error = outcome.achieved_local_error
    return ExplanationRule(
        task=model.task,
        conditions=tuple(conditions),
        alternatives=alternatives,
        consequent_value=pred.value,
        error_bound=0.0 if error is None else float(error),
        trace=trace,
    )


def explain_instance(
    model: ForestModel,
    instance: Sequence[float],
    *,
    method: str | None = None,
    miner: str = "apriori",
    min_support: float = 0.1,
    max_len: int | None = 4,
    k: int = 5,
    seed: int = 0,
    allowed_error: float | None = None,
    importances: Mapping[str, float] | None = None,
) -> tuple[ExplanationRule, ReductionOutcome]:
    """Full pipeline for one instance; method defaults to "123" for
    classification and "ar+rs" for regression."""
    if method is None:
        method = "123" if model.is_classification else "ar+rs"
    outcome = run_pipeline(
        model,
        instance,
        method,
        miner=miner,
        min_support=min_support,
        max_len=max_len,
        k=k,
        seed=seed,
        allowed_error=allowed_error,
    )
    rule = compose_rule(outcome, instance, model, importances)
    return rule, outcome


# ---------------------------------------------------------------------------
# serialization and rendering


def rule_to_dict(rule: ExplanationRule) -> dict:
    conditions = []
    for cond in rule.conditions:
        if isinstance(cond, FeatureRange):
            conditions.append(
                {
                    "type": "range",
                    "feature": cond.feature_name,
                    "feature_id": cond.feature_id,
                    "lower": cond.lower,
                    "upper": cond.upper,
                    "lower_origin": cond.lower_origin,
                    "upper_origin": cond.upper_origin,
                }
            )
        else:
            conditions.append(
                {"type": "equality", "group": cond.group, "value": cond.value}
            )
    if rule.task == "regression":
        consequent: dict = {"value": rule.consequent_value, "error": rule.error_bound}
    else:
        consequent = {"class": rule.consequent_label}
    return {
        "format_version": RULE_FORMAT_VERSION,
        "task": rule.task,
        "conditions": conditions,
        "alternatives": {g: list(v) for g, v in rule.alternatives.items()},
        "consequent": consequent,
        "trace": dict(rule.trace),
    }


def rule_from_dict(model: ForestModel, doc: Mapping) -> ExplanationRule:
    """Load a rule document, resolving open sides to the feature domains.

    Accepts third-party rules: bounds may be one-sided (missing sides fall
    back to the training domain) and features may be referenced by name.
    Provided bounds default to path origin, i.e. exclusive lower.
    """
    by_name = {f.name: f for f in model.features}
    task = doc.get("task", model.task)
    conditions: list[FeatureRange | CategoricalEquality] = []
    for cond in doc.get("conditions", []):
        if cond.get("type", "range") == "equality":
            conditions.append(
                CategoricalEquality(group=str(cond["group"]), value=str(cond["value"]))
            )
            continue
        if "feature_id" in cond:
            spec = model.features[int(cond["feature_id"])]
        else:
            name = cond.get("feature")
            if name not in by_name:
                raise ValueError(f"rule references unknown feature {name!r}")
            spec = by_name[name]
        lower = cond.get("lower")
        upper = cond.get("upper")
        lower_origin = cond.get(
            "lower_origin", DOMAIN_BOUND if lower is None else PATH_BOUND
        )
        upper_origin = cond.get(
            "upper_origin", DOMAIN_BOUND if upper is None else PATH_BOUND
        )
        conditions.append(
            FeatureRange(
                feature_id=spec.id,
                feature_name=spec.name,
                lower=spec.domain_min if lower is None else float(lower),
                upper=spec.domain_max if upper is None else float(upper),
                lower_origin=lower_origin,
                upper_origin=upper_origin,
            )
        )
    alternatives = {
        str(g): tuple(str(v) for v in vals)
        for g, vals in (doc.get("alternatives") or {}).items()
    }
    consequent = doc.get("consequent") or {}
    return ExplanationRule(
        task=task,
        conditions=tuple(conditions),
        alternatives=alternatives,
        consequent_label=(
            None if consequent.get("class") is None else str(consequent["class"])
        ),
        consequent_value=(
            None if consequent.get("value") is None else float(consequent["value"])
        ),
        error_bound=(
            None if consequent.get("error") is None else float(consequent["error"])
        ),
        trace=dict(doc.get("trace") or {}),
    )


@dataclass(frozen=True)
class PlotContext:
    """Per-feature training histograms plus the unreduced rule's bounds."""

    histograms: Mapping[str, tuple[list[float], list[int]]]
    original_ranges: Mapping[str, tuple[float, float]]
    instance_values: Mapping[str, float]
    categorical_current: Mapping[str, str]


def build_plot_context(
    model: ForestModel,
    instance: Sequence[float],
    X: Sequence[Sequence[float]] | None,
    original_rule: ExplanationRule,
    *,
    bins: int = 20,
) -> PlotContext:
    x = validate_instance(model, instance)
    mat = None if X is None else np.asarray(X, dtype=np.float64)
    histograms = {}
    instance_values = {}
    for spec in model.features:
        if spec.kind != "numeric":
            continue
        span = (spec.domain_min, spec.domain_max)
        if span[0] == span[1]:
            span = (span[0], span[0] + 1.0)
        if mat is not None:
            counts, edges = np.histogram(mat[:, spec.id], bins=bins, range=span)
        else:
            edges = np.linspace(span[0], span[1], bins + 1)
            counts = np.zeros(bins, dtype=np.int64)
        histograms[spec.name] = ([float(e) for e in edges], [int(c) for c in counts])
        instance_values[spec.name] = float(x[spec.id])
    original_ranges = {
        c.feature_name: (c.lower, c.upper)
        for c in original_rule.conditions
        if isinstance(c, FeatureRange)
    }
    categorical_current = {}
    for group, members in one_hot_groups(model.features).items():
        for m in members:
            if x[m.id] == 1.0:
                categorical_current[group] = m.member_value  # type: ignore[assignment]
    return PlotContext(
        histograms=histograms,
        original_ranges=original_ranges,
        instance_values=instance_values,
        categorical_current=categorical_current,
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def render_text(rule: ExplanationRule) -> str:
    parts = []
    for cond in rule.conditions:
        if isinstance(cond, FeatureRange):
            parts.append(
                f"{_fmt(cond.lower)} ≤ {cond.feature_name} ≤ {_fmt(cond.upper)}"
            )
        else:
            parts.append(f"{cond.group} = {cond.value}")
    if rule.task == "regression":
        tail = f"prediction {_fmt(rule.consequent_value)} ± {_fmt(rule.error_bound)}"
    else:
        tail = f"'{rule.consequent_label}'"
    head = " and ".join(parts)
    line = f"if {head} then {tail}" if head else f"if then {tail}"
    extras = [
        f"values of {group} that may change the prediction: " + ", ".join(values)
        for group, values in rule.alternatives.items()
    ]
    return "\n".join([line, *extras])


def render(
    rule: ExplanationRule,
    fmt: str = "text",
    *,
    plot_context: PlotContext | None = None,
) -> bytes:
    """Render a rule as "text", "json", or "plotdata" bytes."""
    if fmt == "text":
        return (render_text(rule) + "\n").encode()
    if fmt == "json":
        return (json.dumps(rule_to_dict(rule), indent=2) + "\n").encode()
    if fmt == "plotdata":
        if plot_context is None:
            raise ValueError("plotdata rendering needs a plot context")
        doc: dict = {}
        for cond in rule.conditions:
            if not isinstance(cond, FeatureRange):
                continue
            name = cond.feature_name
            edges, counts = plot_context.histograms.get(name, ([], []))
            original = plot_context.original_ranges.get(name, (cond.lower, cond.upper))
            doc[name] = {
                "histogram": {"edges": edges, "counts": counts},
                "instance_value": plot_context.instance_values.get(name),
                "reduced": [cond.lower, cond.upper],
                "original": [original[0], original[1]],
            }
        categoricals = {}
        for group, values in rule.alternatives.items():
            categoricals[group] = {
                "current": plot_context.categorical_current.get(group),
                "alternatives": list(values),
            }
        for cond in rule.conditions:
            if isinstance(cond, CategoricalEquality) and cond.group not in categoricals:
                categoricals[cond.group] = {"current": cond.value, "alternatives": []}
        doc["categoricals"] = categoricals
        return (json.dumps(doc, indent=2) + "\n").encode()
    raise ValueError(f"unknown render format {fmt!r}")
