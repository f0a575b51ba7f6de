from itertools import chain, combinations

import numpy as np
import pytest

from conclusive_forest.mining import (
    apriori,
    association_rules,
    fpgrowth,
    ranked_antecedents,
)


def brute_force_itemsets(transactions, min_support, max_len=None):
    """Oracle: enumerate every subset of the item universe and count."""
    universe = sorted(set(chain.from_iterable(transactions)))
    tsets = [frozenset(t) for t in transactions]
    threshold = max(1, int(np.ceil(min_support * len(tsets) - 1e-12)))
    out = {}
    top = len(universe) if max_len is None else min(max_len, len(universe))
    for r in range(1, top + 1):
        for combo in combinations(universe, r):
            itemset = frozenset(combo)
            count = sum(itemset <= t for t in tsets)
            if count >= threshold:
                out[itemset] = count
    return out


FIXTURE = [
    {"a", "b", "c"},
    {"a", "b"},
    {"a", "c"},
    {"a"},
    {"b", "c"},
    {"b"},
    {"a", "b", "c"},
    {"c", "d"},
]


@pytest.mark.parametrize("miner", [apriori, fpgrowth])
@pytest.mark.parametrize("min_support", [0.125, 0.25, 0.5])
def test_miners_match_brute_force(miner, min_support):
    assert miner(FIXTURE, min_support) == brute_force_itemsets(FIXTURE, min_support)


@pytest.mark.parametrize("max_len", [1, 2, 3])
def test_max_len_respected(max_len):
    for miner in (apriori, fpgrowth):
        result = miner(FIXTURE, 0.125, max_len=max_len)
        assert result == brute_force_itemsets(FIXTURE, 0.125, max_len=max_len)
        assert all(len(s) <= max_len for s in result)


def test_apriori_equals_fpgrowth_random():
    rng = np.random.default_rng(17)
    for trial in range(25):
        n_items = int(rng.integers(3, 15))
        n_trans = int(rng.integers(5, 80))
        probs = rng.uniform(0.05, 0.5, size=n_items)
        transactions = []
        for _ in range(n_trans):
            t = {i for i in range(n_items) if rng.random() < probs[i]}
            transactions.append(t)
        for support in (0.05, 0.2, 0.4):
            assert apriori(transactions, support) == fpgrowth(transactions, support)


def test_empty_transaction_set_rejected():
    for miner in (apriori, fpgrowth):
        with pytest.raises(ValueError):
            miner([], 0.1)


def test_bad_min_support_rejected():
    with pytest.raises(ValueError):
        apriori(FIXTURE, 0.0)
    with pytest.raises(ValueError):
        fpgrowth(FIXTURE, 1.5)


def test_transactions_may_be_empty_sets():
    result = apriori([set(), {"a"}, {"a"}], 0.5)
    assert result == {frozenset(["a"]): 2}


def test_single_items_make_no_rules():
    itemsets = apriori([{"a"}, {"b"}], 0.5)
    assert association_rules(itemsets) == []


def test_rule_confidence_and_order():
    transactions = [{"a", "b"}] * 3 + [{"a"}] * 1 + [{"b"}] * 6
    itemsets = apriori(transactions, 0.1)
    rules = association_rules(itemsets)
    by_key = {
        (tuple(sorted(r.antecedent)), tuple(sorted(r.consequent))): r for r in rules
    }
    # support(ab)=3, support(a)=4, support(b)=9
    assert by_key[(("a",), ("b",))].confidence == pytest.approx(3 / 4)
    assert by_key[(("b",), ("a",))].confidence == pytest.approx(3 / 9)
    # ascending confidence
    confidences = [r.confidence for r in rules]
    assert confidences == sorted(confidences)


def test_rule_tie_break_prefers_support_then_size():
    # two pairs with confidence 1.0 but different supports
    transactions = [{"a", "b"}] * 6 + [{"c", "d"}] * 4
    rules = association_rules(apriori(transactions, 0.1))
    assert all(r.confidence == 1.0 for r in rules)
    supports = [r.support for r in rules]
    assert supports == sorted(supports, reverse=True)
    antecedents = ranked_antecedents(rules)
    assert antecedents[0] == frozenset({"a"})
    assert antecedents[1] == frozenset({"b"})


def test_ranked_antecedents_dedupe():
    transactions = [{"a", "b", "c"}] * 5 + [{"a", "b"}] * 2
    rules = association_rules(apriori(transactions, 0.2))
    antecedents = ranked_antecedents(rules)
    assert len(antecedents) == len(set(antecedents))
