"""Path/feature reduction strategies and the composition pipeline.

Four interchangeable reducers shrink the set of decision paths an
explanation has to cover:

* association rules -- mine frequent feature sets over the paths and grow a
  feature whitelist antecedent by antecedent (ascending confidence), keeping
  the paths fully covered by the whitelist;
* clustering -- k-medoids over a path-dissimilarity matrix, accumulating
  whole clusters largest-first;
* random selection -- uniform sampling down to the exact retention
  requirement (classification) or random removal while the error budget
  holds (regression);
* distribution bands -- keep the trees whose predictions fall inside
  (or outside) a shrinking band around the mean prediction (regression).

``run_pipeline`` chains them by method code ("1" = association rules,
"2" = clustering, "3" = random; regression uses "ar+rs", "dsi", "dso"),
re-validating the retention requirement and the probability-voting guards
after every stage.  All reducers are pure given their seed.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .mining import MINERS, association_rules, ranked_antecedents
from .clustering import pam
from .model import (
    DecisionPath,
    FeatureSpec,
    ForestModel,
    extract_paths,
    path_interval,
    per_tree_probabilities,
    per_tree_values,
    predict,
)
from .quorum import (
    ErrorBudget,
    RetentionRequirement,
    TieError,
    VoteTally,
    class_advantage_bounds,
    local_error,
    requirement_for,
    soft_argmax_stable,
    soft_vote_floor_ok,
)

CLASSIFICATION_METHODS = ("1", "2", "3", "12", "13", "23", "123")
REGRESSION_METHODS = ("ar+rs", "dsi", "dso")
NO_REDUCTION = "none"

# Shrinking divisors for the distribution-band sweep.
BAND_DIVISORS = (0.1, 0.2, 0.5, 1, 2, 4, 5, 6, 7, 8, 9, 10, 20, 50, 100)
# A +/-3 sigma band stands in for the min/max of a large normal sample,
# making the band sweep deterministic.
DEFAULT_BAND_SCALE = 3.0

DEFAULT_MIN_SUPPORT = 0.1
DEFAULT_MAX_LEN = 4
DEFAULT_CLUSTERS = 5

ErrorFn = Callable[[Sequence[DecisionPath]], float]


@dataclass(frozen=True)
class ReductionOutcome:
    retained_paths: tuple[DecisionPath, ...]
    retained_features: frozenset[int]
    achieved_local_error: float | None
    method_trace: tuple[str, ...]


def _make_outcome(
    paths: Sequence[DecisionPath],
    error: float | None,
    trace: Sequence[str],
) -> ReductionOutcome:
    ordered = tuple(sorted(paths, key=lambda p: p.tree_index))
    features: set[int] = set()
    for p in ordered:
        features |= p.feature_ids()
    return ReductionOutcome(
        retained_paths=ordered,
        retained_features=frozenset(features),
        achieved_local_error=error,
        method_trace=tuple(trace),
    )


def _require_exactly_one(requirement, budget) -> None:
    if (requirement is None) == (budget is None):
        raise ValueError("pass exactly one of requirement= or budget=")


# ---------------------------------------------------------------------------
# path similarity


def _effective_interval(
    path: DecisionPath, spec: FeatureSpec
) -> tuple[float, float] | None:
    interval = path_interval(path, spec.id)
    if interval is None:
        return None
    lo, hi = interval
    if lo == -math.inf:
        lo = spec.domain_min
    if hi == math.inf:
        hi = spec.domain_max
    return lo, hi


def path_similarity(
    p_i: DecisionPath, p_j: DecisionPath, features: Sequence[FeatureSpec]
) -> float:
    """Mean per-feature overlap in [0, 1]; absence from both paths counts
    as full agreement, presence in only one as none."""
    score = 0.0
    for spec in features:
        a = _effective_interval(p_i, spec)
        b = _effective_interval(p_j, spec)
        if a is None and b is None:
            score += 1.0
        elif a is not None and b is not None:
            inter = min(a[1], b[1]) - max(a[0], b[0])
            union = max(a[1], b[1]) - min(a[0], b[0])
            if inter > 0 and union != 0:
                score += inter / union
    return score / len(features)


def dissimilarity_matrix(
    paths: Sequence[DecisionPath], features: Sequence[FeatureSpec]
) -> np.ndarray:
    """(n, n) matrix of 1 - similarity, vectorized over feature intervals."""
    n = len(paths)
    F = len(features)
    present = np.zeros((n, F), dtype=bool)
    lo = np.zeros((n, F), dtype=np.float64)
    hi = np.zeros((n, F), dtype=np.float64)
    for i, path in enumerate(paths):
        for j, spec in enumerate(features):
            interval = _effective_interval(path, spec)
            if interval is not None:
                present[i, j] = True
                lo[i, j], hi[i, j] = interval
    both = present[:, None, :] & present[None, :, :]
    neither = ~present[:, None, :] & ~present[None, :, :]
    inter = np.minimum(hi[:, None, :], hi[None, :, :]) - np.maximum(
        lo[:, None, :], lo[None, :, :]
    )
    union = np.maximum(hi[:, None, :], hi[None, :, :]) - np.minimum(
        lo[:, None, :], lo[None, :, :]
    )
    ratio = np.zeros_like(inter)
    ok = both & (inter > 0) & (union != 0)
    ratio[ok] = inter[ok] / union[ok]
    sim = (ratio.sum(axis=2) + neither.sum(axis=2)) / F
    out = 1.0 - sim
    np.fill_diagonal(out, 0.0)
    return out


# ---------------------------------------------------------------------------
# reducers


def reduce_association_rules(
    paths: Sequence[DecisionPath],
    *,
    requirement: RetentionRequirement | None = None,
    budget: ErrorBudget | None = None,
    error_of: ErrorFn | None = None,
    miner: str = "apriori",
    min_support: float = DEFAULT_MIN_SUPPORT,
    max_len: int | None = DEFAULT_MAX_LEN,
) -> ReductionOutcome:
    """Grow a feature whitelist from mined antecedents until the paths fully
    covered by it meet the requirement (or the error budget).  Falls back to
    all paths when the antecedents run out."""
    _require_exactly_one(requirement, budget)
    if budget is not None and error_of is None:
        raise ValueError("regression reduction needs an error_of callback")
    if not paths:
        raise ValueError("empty transaction set")
    if miner not in MINERS:
        raise ValueError(f"unknown miner {miner!r}")

    transactions = [p.feature_ids() for p in paths]
    itemsets = MINERS[miner](transactions, min_support, max_len)
    antecedents = ranked_antecedents(association_rules(itemsets))

    tag = f"ar(miner={miner},min_support={min_support},max_len={max_len})"
    whitelist: set[int] = set()
    for antecedent in antecedents:
        whitelist |= antecedent
        retained = [p for p in paths if p.feature_ids() <= whitelist]
        if requirement is not None:
            if requirement.satisfied_by(requirement.path_counts(retained)):
                return _make_outcome(retained, None, [tag])
        else:
            err = error_of(retained)  # type: ignore[misc]
            if err <= budget.allowed_error:  # type: ignore[union-attr]
                return _make_outcome(retained, err, [tag])
    # Antecedents exhausted: keep everything.
    err = None if requirement is not None else 0.0
    if budget is not None and error_of is not None:
        err = error_of(paths)
    return _make_outcome(paths, err, [tag, "ar_fallback(all_paths)"])


def reduce_clustering(
    paths: Sequence[DecisionPath],
    requirement: RetentionRequirement,
    *,
    k: int = DEFAULT_CLUSTERS,
    seed: int = 0,
    features: Sequence[FeatureSpec],
) -> ReductionOutcome:
    """Accumulate whole clusters, largest first, until the requirement holds.

    Clustering is deterministic (PAM with greedy build + steepest swaps), so
    ``seed`` only participates in the trace; it is accepted for interface
    parity with the other reducers.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(paths):
        raise ValueError(f"k={k} exceeds the {len(paths)} available paths")
    matrix = dissimilarity_matrix(paths, features)
    clusters = pam(matrix, k)
    ordered = sorted(
        (c for c in clusters if c),
        key=lambda members: (-len(members), members[0]),
    )
    retained: list[DecisionPath] = []
    for members in ordered:
        retained.extend(paths[i] for i in members)
        if requirement.satisfied_by(requirement.path_counts(retained)):
            break
    else:
        if not requirement.satisfied_by(requirement.path_counts(retained)):
            raise ValueError("input paths cannot satisfy the retention requirement")
    return _make_outcome(retained, None, [f"cl(k={k})"])


def reduce_random(
    paths: Sequence[DecisionPath],
    *,
    requirement: RetentionRequirement | None = None,
    budget: ErrorBudget | None = None,
    error_of: ErrorFn | None = None,
    seed: int = 0,
) -> ReductionOutcome:
    """Classification: sample down to exactly the minimum, never touching the
    mandatory per-class counts.  Regression: drop random paths while the
    budget holds, re-adding the last removal on exit."""
    _require_exactly_one(requirement, budget)
    rng = random.Random(seed)
    if requirement is not None:
        by_class: dict[int, list[DecisionPath]] = {}
        for p in paths:
            by_class.setdefault(int(p.vote), []).append(p)
        keep: list[DecisionPath] = []
        for cls in sorted(requirement.mandatory):
            need = requirement.mandatory[cls]
            pool = by_class.get(cls, [])
            if len(pool) < need:
                raise ValueError(
                    f"class {cls} holds {len(pool)} paths, requirement wants {need}"
                )
            keep.extend(pool if len(pool) == need else rng.sample(pool, need))
        rest = [
            p for p in paths if int(p.vote) not in requirement.mandatory
        ]
        if requirement.free_pick > len(rest):
            raise ValueError("not enough non-mandatory paths for the free picks")
        if requirement.free_pick:
            keep.extend(rng.sample(rest, requirement.free_pick))
        return _make_outcome(keep, None, [f"rs(seed={seed})"])

    if error_of is None:
        raise ValueError("regression reduction needs an error_of callback")
    temp = list(paths)
    last: DecisionPath | None = None
    while len(temp) > 1:
        j = rng.randrange(len(temp))
        last = temp.pop(j)
        if error_of(temp) > budget.allowed_error:  # type: ignore[union-attr]
            break
    if last is not None:
        temp.append(last)
    err = error_of(temp)
    return _make_outcome(temp, err, [f"rs(seed={seed})"])


def reduce_distribution(
    model: ForestModel,
    instance: Sequence[float],
    budget: ErrorBudget,
    variant: str,
    *,
    band_scale: float = DEFAULT_BAND_SCALE,
) -> ReductionOutcome:
    """Sweep bands ``mean +/- band_scale*sigma/s`` over a fixed divisor grid
    and keep the smallest within-budget path set found inside ("dsi") or
    outside ("dso") the band.  Falls back to all paths when nothing
    qualifies (including the degenerate sigma = 0 outer case)."""
    if variant not in ("dsi", "dso"):
        raise ValueError(f"unknown distribution variant {variant!r}")
    if model.is_classification:
        raise ValueError("distribution-based reduction applies to regression models")
    paths = extract_paths(model, instance)
    preds = per_tree_values(model, instance)
    mean = float(preds.mean())
    sigma = float(preds.std())

    best_idx: list[int] | None = None
    best_err = 0.0
    best_tag = f"{variant}_fallback(all_paths)"
    best_size = len(paths)
    for divisor in BAND_DIVISORS:
        half = band_scale * sigma / divisor
        if variant == "dsi":
            mask = (preds >= mean - half) & (preds <= mean + half)
        else:
            mask = (preds < mean - half) | (preds > mean + half)
        size = int(mask.sum())
        if size == 0 or size >= best_size:
            continue
        idx = [int(i) for i in np.nonzero(mask)[0]]
        err = local_error(model, instance, idx)
        if err <= budget.allowed_error:
            best_idx = idx
            best_err = err
            best_size = size
            best_tag = f"{variant}(scale={band_scale},divisor={divisor})"
    if best_idx is None:
        return _make_outcome(paths, 0.0, [best_tag])
    return _make_outcome([paths[i] for i in best_idx], best_err, [best_tag])


# ---------------------------------------------------------------------------
# pipeline


def _fill_soft_vote_guards(
    all_paths: Sequence[DecisionPath],
    retained: Sequence[DecisionPath],
    tree_probs: np.ndarray,
    advantage: np.ndarray,
    class_index: int,
) -> tuple[list[DecisionPath], int]:
    """Add paths until both probability-voting guards hold.

    The floor guard tops up with the trees holding the most predicted-class
    mass; the stability guard tops up with the tree whose inclusion best
    repairs the worst rival margin.  Both converge because the full forest
    satisfies the guards (or the prediction itself was a tie)."""
    total = tree_probs.shape[0]
    by_tree = {p.tree_index: p for p in all_paths}
    kept = sorted(p.tree_index for p in retained)
    kept_set = set(kept)
    full_sum = float(tree_probs[:, class_index].sum())
    added = 0

    def floor_ok() -> bool:
        ret = float(tree_probs[kept, class_index].sum())
        return soft_vote_floor_ok(full_sum, ret, total)

    def stable() -> bool:
        return soft_argmax_stable(tree_probs, advantage, kept, class_index)

    while not (floor_ok() and stable()):
        candidates = [t for t in range(total) if t not in kept_set]
        if not candidates:
            raise TieError(
                "probability-voting guards cannot be satisfied even by the full forest"
            )
        if not floor_ok():
            pick = max(candidates, key=lambda t: (tree_probs[t, class_index], -t))
        else:
            mask = np.zeros(total, dtype=bool)
            mask[kept] = True
            margin = (
                tree_probs[mask, class_index : class_index + 1] - tree_probs[mask]
            ).sum(axis=0)
            threat = advantage[~mask].sum(axis=0)
            deficits = threat - margin
            deficits[class_index] = -np.inf
            rival = int(np.argmax(deficits))
            pick = max(
                candidates,
                key=lambda t: (
                    advantage[t, rival]
                    + tree_probs[t, class_index]
                    - tree_probs[t, rival],
                    -t,
                ),
            )
        kept.append(pick)
        kept.sort()
        kept_set.add(pick)
        added += 1
    return [by_tree[t] for t in kept], added


def _classification_pipeline(
    model: ForestModel,
    instance: Sequence[float],
    method: str,
    *,
    miner: str,
    min_support: float,
    max_len: int | None,
    k: int,
    seed: int,
    task: str,
) -> ReductionOutcome:
    paths = extract_paths(model, instance)
    tree_probs = per_tree_probabilities(model, instance)
    predicted = int(np.argmax(tree_probs.mean(axis=0)))
    tally = VoteTally.from_paths(paths, model.n_classes)
    if tally.majority != predicted:
        raise TieError(
            "hard-vote majority and probability-voting prediction disagree; "
            "the retention bounds do not apply"
        )
    requirement = requirement_for(task, tally)
    advantage = class_advantage_bounds(model, predicted)

    if requirement.rationale == "quorum":
        pool: Sequence[DecisionPath] = [
            p for p in paths if int(p.vote) == tally.majority
        ]
    else:
        pool = paths

    trace: list[str] = []
    retained: Sequence[DecisionPath] = list(pool)
    retained, added = _fill_soft_vote_guards(
        paths, retained, tree_probs, advantage, predicted
    )
    if added:
        trace.append(f"guard(+{added})")

    stages = [] if method == NO_REDUCTION else list(method)
    if method == NO_REDUCTION:
        trace.insert(0, "none")
    for code in stages:
        if code == "1":
            out = reduce_association_rules(
                retained,
                requirement=requirement,
                miner=miner,
                min_support=min_support,
                max_len=max_len,
            )
        elif code == "2":
            out = reduce_clustering(
                retained,
                requirement,
                k=min(k, len(retained)),
                seed=seed,
                features=model.features,
            )
        elif code == "3":
            out = reduce_random(retained, requirement=requirement, seed=seed)
        else:  # pragma: no cover - method strings are validated upstream
            raise ValueError(f"unknown stage {code!r}")
        trace.extend(out.method_trace)
        retained = list(out.retained_paths)
        retained, added = _fill_soft_vote_guards(
            paths, retained, tree_probs, advantage, predicted
        )
        if added:
            trace.append(f"guard(+{added})")

    counts: dict[int, int] = {}
    for p in retained:
        counts[int(p.vote)] = counts.get(int(p.vote), 0) + 1
    if not requirement.satisfied_by(counts):
        raise RuntimeError("internal error: reduced set violates the requirement")
    return _make_outcome(retained, None, trace)


def _regression_pipeline(
    model: ForestModel,
    instance: Sequence[float],
    method: str,
    *,
    miner: str,
    min_support: float,
    max_len: int | None,
    seed: int,
    budget: ErrorBudget,
    band_scale: float,
) -> ReductionOutcome:
    paths = extract_paths(model, instance)

    def error_of(subset: Sequence[DecisionPath]) -> float:
        return local_error(model, instance, [p.tree_index for p in subset])

    if method == NO_REDUCTION:
        return _make_outcome(paths, 0.0, ["none"])
    if method == "ar+rs":
        first = reduce_association_rules(
            paths,
            budget=budget,
            error_of=error_of,
            miner=miner,
            min_support=min_support,
            max_len=max_len,
        )
        second = reduce_random(
            first.retained_paths, budget=budget, error_of=error_of, seed=seed
        )
        trace = list(first.method_trace) + list(second.method_trace)
        outcome = _make_outcome(
            second.retained_paths, second.achieved_local_error, trace
        )
    else:
        outcome = reduce_distribution(
            model, instance, budget, method, band_scale=band_scale
        )
    err = outcome.achieved_local_error
    if err is None or err > budget.allowed_error:
        raise RuntimeError("internal error: reduced set violates the error budget")
    return outcome


def run_pipeline(
    model: ForestModel,
    instance: Sequence[float],
    method: str,
    *,
    miner: str = "apriori",
    min_support: float = DEFAULT_MIN_SUPPORT,
    max_len: int | None = DEFAULT_MAX_LEN,
    k: int = DEFAULT_CLUSTERS,
    seed: int = 0,
    allowed_error: ErrorBudget | float | None = None,
    band_scale: float = DEFAULT_BAND_SCALE,
) -> ReductionOutcome:
    """Run the reduction method chain appropriate for the model's task.

    ``method`` is one of "1", "2", "3", "12", "13", "23", "123" for
    classification (digits apply in order), "ar+rs" / "dsi" / "dso" for
    regression, or "none" for the unreduced baseline.
    """
    method = method.lower()
    if model.is_classification:
        if method != NO_REDUCTION and method not in CLASSIFICATION_METHODS:
            if method in REGRESSION_METHODS:
                raise ValueError(
                    f"method {method!r} applies to regression tasks only"
                )
            raise ValueError(f"unknown classification method {method!r}")
        return _classification_pipeline(
            model,
            instance,
            method,
            miner=miner,
            min_support=min_support,
            max_len=max_len,
            k=k,
            seed=seed,
            task=model.task,
        )
    if method != NO_REDUCTION and method not in REGRESSION_METHODS:
        if method in CLASSIFICATION_METHODS:
            raise ValueError(
                f"method {method!r} applies to classification tasks only"
            )
        raise ValueError(f"unknown regression method {method!r}")
    if method == NO_REDUCTION:
        budget = ErrorBudget(0.0) if allowed_error is None else _as_budget(allowed_error)
    else:
        if allowed_error is None:
            raise ValueError("regression reduction needs an allowed_error")
        budget = _as_budget(allowed_error)
    return _regression_pipeline(
        model,
        instance,
        method,
        miner=miner,
        min_support=min_support,
        max_len=max_len,
        seed=seed,
        budget=budget,
        band_scale=band_scale,
    )


def _as_budget(allowed_error: ErrorBudget | float) -> ErrorBudget:
    if isinstance(allowed_error, ErrorBudget):
        return allowed_error
    return ErrorBudget(float(allowed_error))
