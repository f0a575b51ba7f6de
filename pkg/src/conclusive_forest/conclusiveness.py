"""Exact single-feature perturbation audit of explanation rules.

A rule is conclusive when no single-feature change can move the prediction:
any value at all for features the rule omits, any in-range value for
features it includes.  Because a forest's output along one feature is
piecewise constant between that feature's split thresholds, probing every
threshold, every midpoint between consecutive thresholds, and the domain
endpoints is exhaustive -- no sampling involved.

Semantics pinned down here:

* numeric probes run over [domain_min, domain_max]; audits are relative to
  the declared training domain;
* a rule range whose lower bound came from a path is open on the left (the
  condition was a strict ">"), so the bound itself is not probed;
* a categorical group with an equality condition is pinned by the rule, so
  other category values are out of range and carry no guarantee; a group
  without an equality must tolerate every value except the listed
  alternatives;
* regression predictions must stay within the rule's error bound of the
  consequent (plus a tiny float-noise tolerance shared with the tests).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .explanation import (
    CategoricalEquality,
    ExplanationRule,
    FeatureRange,
    rule_from_dict,
)
from .model import (
    ForestModel,
    feature_thresholds,
    one_hot_groups,
    predict,
    predict_batch,
    validate_instance,
)

_REL_TOL = 1e-9


class ConsequentMismatchError(ValueError):
    """The rule's consequent is not the model's prediction for the instance."""


@dataclass(frozen=True)
class Violation:
    feature_id: int
    value: float
    new_prediction: str | float


@dataclass(frozen=True)
class AuditReport:
    rule_id: str
    verdict: str  # "conclusive" | "violated"
    violations: tuple[Violation, ...]
    probes_evaluated: int


def breakpoints(model: ForestModel, feature_id: int) -> list[float]:
    """Sorted distinct split thresholds on one feature across all trees."""
    return feature_thresholds(model, feature_id)


def regression_tolerance(consequent: float, bound: float) -> float:
    return _REL_TOL * max(1.0, abs(consequent), bound)


def probe_values(
    thresholds: Sequence[float], lower: float, upper: float, lower_inclusive: bool
) -> list[float]:
    """Every piecewise-constant segment of the interval gets a probe:
    thresholds, midpoints between consecutive anchors, and the interval
    endpoints (the lower one only when the interval is closed there)."""
    if upper < lower:
        return []

    def in_range(v: float) -> bool:
        if v > upper:
            return False
        return v > lower or (lower_inclusive and v == lower)

    inner = [t for t in thresholds if in_range(t)]
    anchors = [lower, *inner, upper]
    probes = set(inner)
    probes.add(upper)
    if lower_inclusive:
        probes.add(lower)
    for a, b in zip(anchors, anchors[1:]):
        mid = (a + b) / 2.0
        if in_range(mid):
            probes.add(mid)
    return sorted(probes)


def _merged_ranges(rule: ExplanationRule) -> dict[int, tuple[float, float, bool]]:
    """feature id -> (lower, upper, lower_inclusive), intersecting duplicate
    conditions on the same feature (exclusivity wins on equal bounds)."""
    merged: dict[int, tuple[float, float, bool]] = {}
    for cond in rule.conditions:
        if not isinstance(cond, FeatureRange):
            continue
        lo, hi, inclusive = cond.lower, cond.upper, not cond.lower_exclusive
        if cond.feature_id in merged:
            plo, phi, pinc = merged[cond.feature_id]
            if lo > plo:
                plo, pinc = lo, inclusive
            elif lo == plo:
                pinc = pinc and inclusive
            merged[cond.feature_id] = (plo, min(hi, phi), pinc)
        else:
            merged[cond.feature_id] = (lo, hi, inclusive)
    return merged


class _Prober:
    """Evaluates probe rows in batch and records prediction changes."""

    def __init__(self, model: ForestModel, rule: ExplanationRule):
        self.model = model
        self.rule = rule
        self.violations: list[Violation] = []
        self.evaluated = 0
        if model.is_classification:
            self.base_class = model.classes.index(rule.consequent_label)  # type: ignore[union-attr]
            self.consequent = None
            self.tolerance = 0.0
        else:
            self.base_class = None
            self.consequent = float(rule.consequent_value)  # type: ignore[arg-type]
            bound = float(rule.error_bound or 0.0)
            self.tolerance = bound + regression_tolerance(self.consequent, bound)

    def check(
        self, rows: np.ndarray, feature_ids: Sequence[int], values: Sequence[float]
    ) -> None:
        self.evaluated += rows.shape[0]
        out = predict_batch(self.model, rows)
        if self.model.is_classification:
            labels = np.argmax(out, axis=1)
            bad = np.nonzero(labels != self.base_class)[0]
            for i in bad:
                self.violations.append(
                    Violation(
                        feature_ids[int(i)],
                        float(values[int(i)]),
                        self.model.classes[int(labels[i])],  # type: ignore[index]
                    )
                )
        else:
            bad = np.nonzero(np.abs(out - self.consequent) > self.tolerance)[0]
            for i in bad:
                self.violations.append(
                    Violation(feature_ids[int(i)], float(values[int(i)]), float(out[i]))
                )


def audit(
    model: ForestModel,
    instance: Sequence[float],
    rule: ExplanationRule | Mapping,
) -> AuditReport:
    """Probe the rule against the model; violations come back sorted."""
    if not isinstance(rule, ExplanationRule):
        rule = rule_from_dict(model, rule)
    x = validate_instance(model, instance)

    prediction = predict(model, x)
    if model.is_classification:
        predicted_label = model.classes[prediction.class_index]  # type: ignore[index]
        if rule.consequent_label != predicted_label:
            raise ConsequentMismatchError(
                f"rule concludes {rule.consequent_label!r} but the model "
                f"predicts {predicted_label!r}"
            )
    else:
        if rule.consequent_value is None:
            raise ConsequentMismatchError("regression rule carries no consequent value")
        tol = regression_tolerance(
            float(rule.consequent_value), float(rule.error_bound or 0.0)
        )
        if abs(prediction.value - rule.consequent_value) > tol:  # type: ignore[operator]
            raise ConsequentMismatchError(
                f"rule concludes {rule.consequent_value} but the model "
                f"predicts {prediction.value}"
            )

    ranges = _merged_ranges(rule)
    for fid in ranges:
        if model.features[fid].kind != "numeric":
            raise ValueError(
                f"range condition on one-hot column {model.features[fid].name!r}; "
                "encode categorical constraints as equalities"
            )

    prober = _Prober(model, rule)

    # Numeric features: rule ranges probe within their interval, omitted
    # features over the whole declared domain.
    for spec in model.features:
        if spec.kind != "numeric":
            continue
        if spec.id in ranges:
            lo, hi, inclusive = ranges[spec.id]
            lo = max(lo, spec.domain_min)
            hi = min(hi, spec.domain_max)
        else:
            lo, hi, inclusive = spec.domain_min, spec.domain_max, True
        values = probe_values(breakpoints(model, spec.id), lo, hi, inclusive)
        if not values:
            continue
        rows = np.tile(x, (len(values), 1))
        rows[:, spec.id] = values
        prober.check(rows, [spec.id] * len(values), values)

    # Categorical groups: an equality pins the group (out-of-range values
    # carry no guarantee); otherwise every value except the listed
    # alternatives must leave the prediction alone.
    pinned = {c.group for c in rule.conditions if isinstance(c, CategoricalEquality)}
    for group, members in one_hot_groups(model.features).items():
        if group in pinned:
            continue
        covered = set(rule.alternatives.get(group, ()))
        candidates = [
            m for m in members if x[m.id] != 1.0 and m.member_value not in covered
        ]
        if not candidates:
            continue
        member_ids = [m.id for m in members]
        rows = np.tile(x, (len(candidates), 1))
        rows[:, member_ids] = 0.0
        for i, m in enumerate(candidates):
            rows[i, m.id] = 1.0
        prober.check(rows, [m.id for m in candidates], [1.0] * len(candidates))

    violations = sorted(prober.violations, key=lambda v: (v.feature_id, v.value))
    return AuditReport(
        rule_id=rule.rule_id,
        verdict="conclusive" if not violations else "violated",
        violations=tuple(violations),
        probes_evaluated=prober.evaluated,
    )


def report_to_dict(report: AuditReport) -> dict:
    return {
        "rule_id": report.rule_id,
        "verdict": report.verdict,
        "probes_evaluated": report.probes_evaluated,
        "violations": [
            {
                "feature_id": v.feature_id,
                "value": v.value,
                "new_prediction": v.new_prediction,
            }
            for v in report.violations
        ],
    }
