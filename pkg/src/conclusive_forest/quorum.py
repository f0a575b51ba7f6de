"""How many paths an explanation must keep for the prediction to be safe.

Classification: a retained set is safe when no reassignment of the dropped
trees' votes can overtake the predicted class.  With a strict majority it
suffices to keep ``floor(T/2) + 1`` majority-class paths; below a strict
majority the bound becomes ``T + |second| - |majority| + 1`` paths, keeping
the top two classes in full.

Because inference averages probability vectors rather than counting hard
votes, two extra predicates guard retained sets: the floor identity of the
retained probability mass, and a per-class worst-case check against the
most adversarial leaf each dropped tree could land on.  The second predicate
is what actually makes single-feature perturbations provably harmless.

Regression: dropped trees are charged their worst-case leaf value, giving a
``local_error`` bound the caller compares against an ``allowed_error``
budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import DecisionPath, ForestModel, per_tree_values, predict_batch


class TieError(RuntimeError):
    """No strict majority (or votes and probabilities disagree); the
    retention bounds assume a unique winner, so explanation aborts."""


@dataclass(frozen=True)
class VoteTally:
    """Hard-vote counts per class for one instance."""

    counts: tuple[int, ...]
    majority: int
    runner_up: int | None
    total: int

    @classmethod
    def from_votes(cls, votes: Iterable[int], n_classes: int) -> "VoteTally":
        counts = [0] * n_classes
        total = 0
        for v in votes:
            counts[v] += 1
            total += 1
        if total == 0:
            raise ValueError("empty vote set")
        order = sorted(range(n_classes), key=lambda c: (-counts[c], c))
        majority = order[0]
        runner_up = order[1] if n_classes > 1 else None
        return cls(counts=tuple(counts), majority=majority, runner_up=runner_up, total=total)

    @classmethod
    def from_paths(cls, paths: Sequence[DecisionPath], n_classes: int) -> "VoteTally":
        return cls.from_votes((int(p.vote) for p in paths), n_classes)


@dataclass(frozen=True)
class RetentionRequirement:
    """Counts a retained path set must honor to keep the prediction safe."""

    minimum_paths: int
    mandatory: Mapping[int, int]  # class index -> paths that must stay
    free_pick: int
    rationale: str  # "quorum" | "k_rule"

    def satisfied_by(self, class_counts: Mapping[int, int]) -> bool:
        total = sum(class_counts.values())
        if total < self.minimum_paths:
            return False
        return all(
            class_counts.get(c, 0) >= need for c, need in self.mandatory.items()
        )

    def path_counts(self, paths: Iterable[DecisionPath]) -> dict[int, int]:
        counts: dict[int, int] = {}
        for p in paths:
            counts[int(p.vote)] = counts.get(int(p.vote), 0) + 1
        return counts


@dataclass(frozen=True)
class ErrorBudget:
    allowed_error: float
    default_source: str = "user"  # "model_mae" | "user"

    def __post_init__(self) -> None:
        if not (self.allowed_error >= 0.0):
            raise ValueError("allowed_error must be >= 0")


def quorum_size(total: int) -> int:
    """Strict majority: floor(total/2) + 1."""
    return total // 2 + 1


def requirement_binary(tally: VoteTally) -> RetentionRequirement:
    """Keep a strict majority of majority-class paths; nothing else needed."""
    quorum = quorum_size(tally.total)
    majority_count = tally.counts[tally.majority]
    if majority_count < quorum:
        raise TieError(
            f"no strict majority: top class holds {majority_count} of {tally.total} votes"
        )
    return RetentionRequirement(
        minimum_paths=quorum,
        mandatory={tally.majority: quorum},
        free_pick=0,
        rationale="quorum",
    )


def requirement_multiclass(tally: VoteTally) -> RetentionRequirement:
    """Strict-majority rule when it applies, otherwise keep the top two
    classes in full plus ``total + |second| - |majority| + 1 - both`` more."""
    majority_count = tally.counts[tally.majority]
    if tally.runner_up is None:
        return requirement_binary(tally)
    second_count = tally.counts[tally.runner_up]
    if majority_count == second_count:
        raise TieError(
            f"tie between top classes ({majority_count} votes each)"
        )
    if majority_count >= quorum_size(tally.total):
        return requirement_binary(tally)
    minimum = tally.total + second_count - majority_count + 1
    free_pick = minimum - majority_count - second_count
    return RetentionRequirement(
        minimum_paths=minimum,
        mandatory={tally.majority: majority_count, tally.runner_up: second_count},
        free_pick=free_pick,
        rationale="k_rule",
    )


def requirement_for(task: str, tally: VoteTally) -> RetentionRequirement:
    if task == "binary":
        return requirement_binary(tally)
    if task == "multiclass":
        return requirement_multiclass(tally)
    raise ValueError(f"no retention requirement for task {task!r}")


def local_error(
    model: ForestModel, instance: Sequence[float], retained: Iterable[int]
) -> float:
    """Worst-case shift of the mean prediction when every tree outside
    ``retained`` is moved to its farthest leaf extreme.

    Both directions are evaluated (all excluded trees pushed to their minimum,
    all pushed to their maximum) and the larger shift is returned, so the
    bound holds for any combination of leaves the excluded trees could
    actually reach.  With a single excluded tree this equals charging the
    extreme farther from its prediction (ties resolve to the maximum).
    """
    if model.is_classification:
        raise ValueError("local_error applies to regression models")
    preds = per_tree_values(model, instance)
    total = len(model.trees)
    retained_set = set(int(t) for t in retained)
    if not retained_set.issubset(range(total)):
        raise ValueError("retained set references unknown tree indices")
    excluded = [t for t in range(total) if t not in retained_set]
    if not excluded:
        return 0.0
    stats = model.tree_stats
    assert stats is not None
    down = sum(preds[t] - stats[t].min_pred for t in excluded)
    up = sum(stats[t].max_pred - preds[t] for t in excluded)
    return max(down, up) / total


def default_allowed_error(
    model: ForestModel, X: Sequence[Sequence[float]], y: Sequence[float]
) -> ErrorBudget:
    """Model mean absolute error over a validation set, as a default budget."""
    if model.is_classification:
        raise ValueError("error budgets apply to regression models")
    targets = np.asarray(y, dtype=np.float64)
    if targets.size == 0:
        raise ValueError("empty validation set")
    preds = predict_batch(model, X)
    if preds.shape != targets.shape:
        raise ValueError("validation rows and targets disagree in length")
    mae = float(np.mean(np.abs(preds - targets)))
    return ErrorBudget(allowed_error=mae, default_source="model_mae")


def soft_vote_floor_ok(
    full_probability_sum: float, retained_probability_sum: float, total_trees: int
) -> bool:
    """Floor identity of the predicted-class probability mass.

    ``floor(sum/T + 1/2)`` must be the same whether the sum runs over the
    retained trees only or over the whole forest.
    """
    lhs = math.floor(retained_probability_sum / total_trees + 0.5)
    rhs = math.floor(full_probability_sum / total_trees + 0.5)
    return lhs == rhs


def class_advantage_bounds(model: ForestModel, class_index: int) -> np.ndarray:
    """(T, C) worst-case leaf advantage of each class over ``class_index``.

    Entry [t, j] is the largest value of ``p(j) - p(class_index)`` over all
    leaves of tree t: the most a dropped tree t could favor class j if a
    perturbation sent it to its most adversarial leaf.
    """
    if not model.is_classification:
        raise ValueError("advantage bounds apply to classification models")
    rows = []
    for tree in model.trees:
        leaves = tree.leaf_values()  # (L, C)
        rows.append(np.max(leaves - leaves[:, class_index : class_index + 1], axis=0))
    return np.array(rows, dtype=np.float64)


def soft_argmax_stable(
    tree_probs: np.ndarray,
    advantage: np.ndarray,
    retained: Iterable[int],
    class_index: int,
) -> bool:
    """True when no reassignment of dropped trees' leaves can dethrone
    ``class_index`` under probability averaging.

    For every rival j the retained margin ``sum(p(M) - p(j))`` must strictly
    exceed the dropped trees' total worst-case advantage for j.
    """
    total = tree_probs.shape[0]
    mask = np.zeros(total, dtype=bool)
    mask[list(retained)] = True
    margins = tree_probs[mask, class_index : class_index + 1] - tree_probs[mask]
    retained_margin = margins.sum(axis=0)  # (C,)
    dropped_adv = advantage[~mask].sum(axis=0) if (~mask).any() else np.zeros_like(retained_margin)
    for j in range(tree_probs.shape[1]):
        if j == class_index:
            continue
        if not (retained_margin[j] > dropped_adv[j]):
            return False
    return True
