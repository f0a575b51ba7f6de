"""Frequent itemset mining (apriori and FP-growth) plus rule enumeration.

Both miners return identical ``itemset -> transaction count`` mappings for
the same inputs; the choice is a performance knob, never a semantic one.
Items only need to be hashable and mutually sortable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Hashable, Iterable, Sequence

Item = Hashable
Itemset = frozenset


def _min_count(min_support: float, n_transactions: int) -> int:
    if not (0.0 < min_support <= 1.0):
        raise ValueError("min_support must lie in (0, 1]")
    return max(1, math.ceil(min_support * n_transactions - 1e-12))


def apriori(
    transactions: Sequence[Iterable[Item]],
    min_support: float,
    max_len: int | None = None,
) -> dict[Itemset, int]:
    """Level-wise mining with candidate pruning."""
    if not transactions:
        raise ValueError("empty transaction set")
    tsets = [frozenset(t) for t in transactions]
    threshold = _min_count(min_support, len(tsets))

    counts: dict[Itemset, int] = {}
    single: dict[Item, int] = {}
    for t in tsets:
        for item in t:
            single[item] = single.get(item, 0) + 1
    frequent = {
        frozenset([item]): c for item, c in single.items() if c >= threshold
    }
    counts.update(frequent)

    k = 2
    current = sorted(frequent, key=lambda s: tuple(sorted(map(repr, s))))
    while current and (max_len is None or k <= max_len):
        prev = set(current)
        candidates = set()
        sorted_sets = [tuple(sorted(s, key=repr)) for s in current]
        for a, b in combinations(sorted_sets, 2):
            if a[:-1] == b[:-1]:
                cand = frozenset(a) | frozenset(b)
                if len(cand) != k:
                    continue
                if all(frozenset(sub) in prev for sub in combinations(cand, k - 1)):
                    candidates.add(cand)
        if not candidates:
            break
        tally = {c: 0 for c in candidates}
        for t in tsets:
            if len(t) < k:
                continue
            for cand in candidates:
                if cand <= t:
                    tally[cand] += 1
        level = {c: n for c, n in tally.items() if n >= threshold}
        counts.update(level)
        current = sorted(level, key=lambda s: tuple(sorted(map(repr, s))))
        k += 1
    return counts


class _FPNode:
    __slots__ = ("item", "count", "parent", "children")

    def __init__(self, item: Item | None, parent: "_FPNode | None"):
        self.item = item
        self.count = 0
        self.parent = parent
        self.children: dict[Item, _FPNode] = {}


def _build_fp_tree(
    weighted: Iterable[tuple[Sequence[Item], int]], order: dict[Item, int]
) -> tuple[_FPNode, dict[Item, list[_FPNode]]]:
    root = _FPNode(None, None)
    links: dict[Item, list[_FPNode]] = {}
    for items, weight in weighted:
        ranked = sorted((i for i in items if i in order), key=lambda i: order[i])
        node = root
        for item in ranked:
            child = node.children.get(item)
            if child is None:
                child = _FPNode(item, node)
                node.children[item] = child
                links.setdefault(item, []).append(child)
            child.count += weight
            node = child
    return root, links


def _mine_fp(
    weighted: list[tuple[Sequence[Item], int]],
    threshold: int,
    suffix: Itemset,
    out: dict[Itemset, int],
    max_len: int | None,
) -> None:
    item_counts: dict[Item, int] = {}
    for items, weight in weighted:
        for item in set(items):
            item_counts[item] = item_counts.get(item, 0) + weight
    frequent = {i: c for i, c in item_counts.items() if c >= threshold}
    if not frequent:
        return
    # stable item order: descending count, ascending repr
    order = {
        item: rank
        for rank, item in enumerate(
            sorted(frequent, key=lambda i: (-frequent[i], repr(i)))
        )
    }
    _, links = _build_fp_tree(weighted, order)

    for item in sorted(order, key=lambda i: -order[i]):  # least frequent first
        support = frequent[item]
        itemset = suffix | {item}
        out[itemset] = support
        if max_len is not None and len(itemset) >= max_len:
            continue
        conditional: list[tuple[Sequence[Item], int]] = []
        for node in links[item]:
            path = []
            parent = node.parent
            while parent is not None and parent.item is not None:
                path.append(parent.item)
                parent = parent.parent
            if path:
                conditional.append((path, node.count))
        if conditional:
            _mine_fp(conditional, threshold, itemset, out, max_len)


def fpgrowth(
    transactions: Sequence[Iterable[Item]],
    min_support: float,
    max_len: int | None = None,
) -> dict[Itemset, int]:
    """FP-tree mining over conditional pattern bases."""
    if not transactions:
        raise ValueError("empty transaction set")
    tsets = [frozenset(t) for t in transactions]
    threshold = _min_count(min_support, len(tsets))
    out: dict[Itemset, int] = {}
    _mine_fp([(tuple(t), 1) for t in tsets], threshold, frozenset(), out, max_len)
    return out


MINERS = {"apriori": apriori, "fpgrowth": fpgrowth}


@dataclass(frozen=True)
class AssociationRule:
    antecedent: Itemset
    consequent: Itemset
    support: int  # transaction count of antecedent | consequent
    confidence: float


def association_rules(itemsets: dict[Itemset, int]) -> list[AssociationRule]:
    """All rules X => Z\\X from the mined itemsets, sorted by ascending
    confidence; ties break on higher support, shorter antecedent, then the
    sorted antecedent items."""
    rules = []
    for itemset, count in itemsets.items():
        if len(itemset) < 2:
            continue
        items = sorted(itemset, key=repr)
        for r in range(1, len(items)):
            for antecedent in combinations(items, r):
                aset = frozenset(antecedent)
                base = itemsets.get(aset)
                if base is None:
                    continue  # antecedent pruned by max_len
                rules.append(
                    AssociationRule(
                        antecedent=aset,
                        consequent=itemset - aset,
                        support=count,
                        confidence=count / base,
                    )
                )
    rules.sort(
        key=lambda rule: (
            rule.confidence,
            -rule.support,
            len(rule.antecedent),
            tuple(sorted(rule.antecedent, key=repr)),
        )
    )
    return rules


def ranked_antecedents(rules: Sequence[AssociationRule]) -> list[Itemset]:
    """Antecedents in rule order with duplicates dropped."""
    seen: set[Itemset] = set()
    ordered = []
    for rule in rules:
        if rule.antecedent not in seen:
            seen.add(rule.antecedent)
            ordered.append(rule.antecedent)
    return ordered
