import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _factories import (
    constant_tree,
    leaf,
    make_model,
    model_doc,
    numeric_features,
    random_regression_model,
    random_classification_model,
    split,
    stump,
)

from conclusive_forest import (
    DecisionPath,
    ModelFormatError,
    PathCondition,
    extract_paths,
    load_model,
    path_interval,
    predict,
    predict_batch,
    serialize_model,
)
from conclusive_forest.model import model_to_dict


def binary_doc(trees, n_features=1):
    return model_doc(
        "binary", numeric_features(n_features), trees, classes=["no", "yes"]
    )


def test_smallest_legal_model():
    model = make_model(binary_doc([stump(0, 0.5, [1.0, 0.0], [0.0, 1.0])]))
    assert len(model.trees) == 1
    assert model.task == "binary"


def test_unnormalized_leaf_rejected():
    doc = binary_doc([stump(0, 0.5, [0.6, 0.3], [0.0, 1.0])])
    with pytest.raises(ModelFormatError, match="sums to"):
        make_model(doc)


def test_tree_stats_recomputed_and_cross_checked():
    rng = np.random.default_rng(4)
    model = random_regression_model(rng, n_trees=100, n_features=3, depth=4)
    doc = model_to_dict(model)
    # oracle: walk the raw document and collect leaf extrema per tree
    for tree_doc, stats in zip(doc["trees"], doc["tree_stats"]):
        values = [n["leaf_value"] for n in tree_doc["nodes"] if "leaf_value" in n]
        assert stats["min_pred"] == min(values)
        assert stats["max_pred"] == max(values)
    # stored stats that disagree must be rejected
    doc["tree_stats"][0]["min_pred"] -= 1.0
    with pytest.raises(ModelFormatError, match="stats"):
        load_model(json.dumps(doc))


def test_serialize_round_trip_bit_exact():
    rng = np.random.default_rng(1)
    model = random_classification_model(rng, n_trees=7, n_features=4, n_classes=3)
    text = serialize_model(model)
    again = load_model(text)
    assert model_to_dict(again) == model_to_dict(model)
    assert serialize_model(again) == text


def test_dangling_child_rejected():
    doc = binary_doc(
        [{"nodes": [split(0, 0, 0.5, 1, 99), leaf(1, [1.0, 0.0])]}]
    )
    with pytest.raises(ModelFormatError, match="dangling"):
        make_model(doc)


def test_two_parents_rejected():
    doc = binary_doc(
        [
            {
                "nodes": [
                    split(0, 0, 0.5, 1, 2),
                    split(1, 0, 0.2, 2, 3),  # node 2 referenced twice
                    leaf(2, [1.0, 0.0]),
                    leaf(3, [0.0, 1.0]),
                ]
            }
        ]
    )
    with pytest.raises(ModelFormatError, match="parent"):
        make_model(doc)


def test_relation_field_rejected_unless_canonical():
    nodes = [split(0, 0, 0.5, 1, 2), leaf(1, [1.0, 0.0]), leaf(2, [0.0, 1.0])]
    nodes[0]["relation"] = "<"
    with pytest.raises(ModelFormatError, match="relation"):
        make_model(binary_doc([{"nodes": nodes}]))
    nodes[0]["relation"] = "<="
    assert make_model(binary_doc([{"nodes": nodes}])).n_features == 1


def test_task_leaf_mismatch_rejected():
    with pytest.raises(ModelFormatError, match="scalar"):
        make_model(
            model_doc("regression", numeric_features(1), [constant_tree([0.5, 0.5])])
        )
    with pytest.raises(ModelFormatError, match="probability vector"):
        make_model(binary_doc([constant_tree(3.0)]))


def test_binary_needs_two_classes():
    doc = model_doc(
        "binary",
        numeric_features(1),
        [constant_tree([0.2, 0.3, 0.5])],
        classes=["a", "b", "c"],
    )
    with pytest.raises(ModelFormatError, match="two classes"):
        make_model(doc)


def test_predict_constant_ensemble():
    vec = [0.25, 0.75]
    model = make_model(binary_doc([constant_tree(vec)] * 5))
    pred = predict(model, [0.1])
    assert pred.probabilities == (0.25, 0.75)
    assert pred.class_index == 1


def test_predict_soft_vote_floor_example():
    # 70 of 100 hard votes for class 1 with {0,1} leaf vectors
    trees = [constant_tree([0.0, 1.0])] * 70 + [constant_tree([1.0, 0.0])] * 30
    model = make_model(binary_doc(trees))
    pred = predict(model, [0.0])
    assert pred.class_index == 1
    assert math.floor(sum(p.vote == 1 for p in extract_paths(model, [0.0])) / 100 + 0.5) == 1


def test_predict_regression_mean():
    trees = [constant_tree(v) for v in (1.0, 2.0, 6.0)]
    model = make_model(model_doc("regression", numeric_features(1), trees))
    assert predict(model, [0.0]).value == pytest.approx(3.0)


def test_predict_dimension_and_finite_errors():
    model = make_model(binary_doc([constant_tree([1.0, 0.0])]))
    with pytest.raises(ValueError, match="expects"):
        predict(model, [0.1, 0.2])
    with pytest.raises(ValueError, match="finite"):
        predict(model, [float("nan")])


def test_threshold_tie_goes_left():
    model = make_model(binary_doc([stump(0, 0.5, [1.0, 0.0], [0.0, 1.0])]))
    (path,) = extract_paths(model, [0.5])
    assert path.conditions == (PathCondition(0, "<=", 0.5),)
    assert path.vote == 0


def test_extract_paths_depth_one():
    model = make_model(binary_doc([stump(0, 0.7, [1.0, 0.0], [0.0, 1.0])]))
    (path,) = extract_paths(model, [0.2])
    assert path.conditions == (PathCondition(0, "<=", 0.7),)


def _oracle_traverse(tree_doc, x):
    nodes = {n["node_id"]: n for n in tree_doc["nodes"]}
    children = set()
    for n in tree_doc["nodes"]:
        if "leaf_value" in n:
            continue
        children.add(n["left"])
        children.add(n["right"])
    (root,) = [nid for nid in nodes if nid not in children]
    node = nodes[root]
    while "leaf_value" not in node:
        node = nodes[node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]]
    return node["leaf_value"]


def test_extract_paths_matches_independent_traversal():
    rng = np.random.default_rng(3)
    model = random_classification_model(rng, n_trees=12, n_features=5, n_classes=3, depth=4)
    doc = model_to_dict(model)
    for _ in range(25):
        x = rng.uniform(0, 1, size=5)
        paths = extract_paths(model, x)
        assert len(paths) == len(model.trees)
        for path, tree_doc in zip(paths, doc["trees"]):
            oracle_leaf = _oracle_traverse(tree_doc, x)
            assert path.vote == int(np.argmax(oracle_leaf))
            for cond in path.conditions:
                if cond.relation == "<=":
                    assert x[cond.feature_id] <= cond.threshold
                else:
                    assert x[cond.feature_id] > cond.threshold


def test_predict_equals_mean_of_path_votes():
    rng = np.random.default_rng(8)
    model = random_regression_model(rng, n_trees=9, n_features=3, depth=3)
    for _ in range(10):
        x = rng.uniform(0, 1, size=3)
        paths = extract_paths(model, x)
        assert predict(model, x).value == pytest.approx(
            np.mean([p.vote for p in paths])
        )


def test_predict_batch_matches_single():
    rng = np.random.default_rng(9)
    model = random_classification_model(rng, n_trees=6, n_features=4, n_classes=2, depth=3)
    X = rng.uniform(0, 1, size=(20, 4))
    batch = predict_batch(model, X)
    for i in range(20):
        assert predict(model, X[i]).probabilities == pytest.approx(tuple(batch[i]))


def test_path_interval_examples():
    path = DecisionPath(
        tree_index=0,
        conditions=(
            PathCondition(1, ">", 0.2),
            PathCondition(1, "<=", 0.5),
            PathCondition(1, ">", 0.1),
        ),
        vote=0,
    )
    assert path_interval(path, 1) == (0.2, 0.5)
    assert path_interval(path, 2) is None
    one_sided = DecisionPath(0, (PathCondition(0, ">", 0.3),), 0)
    assert path_interval(one_sided, 0) == (0.3, math.inf)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_path_interval_contains_instance(seed):
    rng = np.random.default_rng(seed)
    model = random_classification_model(rng, n_trees=4, n_features=3, n_classes=2, depth=4)
    x = rng.uniform(0, 1, size=3)
    for path in extract_paths(model, x):
        for fid in path.feature_ids():
            lo, hi = path_interval(path, fid)
            assert lo < x[fid] <= hi


def test_majority_path_structure(banknote_model, banknote_data):
    X, _ = banknote_data
    paths = extract_paths(banknote_model, X[0])
    assert len(paths) == len(banknote_model.trees)
    pred = predict(banknote_model, X[0])
    majority = sum(p.vote == pred.class_index for p in paths)
    assert majority > len(paths) // 2


def test_bad_documents():
    with pytest.raises(ModelFormatError, match="format_version"):
        load_model(json.dumps({"format_version": "2", "task": "binary"}))
    with pytest.raises(ModelFormatError, match="malformed"):
        load_model(b"{not json")
    with pytest.raises(ModelFormatError, match="task"):
        load_model(json.dumps({"format_version": "1", "task": "ranking"}))
    with pytest.raises(ModelFormatError, match="at least one tree"):
        make_model(model_doc("regression", numeric_features(1), []))
    with pytest.raises(ModelFormatError, match="contiguous"):
        doc = model_doc(
            "regression",
            [dict(numeric_features(1)[0], id=3)],
            [constant_tree(1.0)],
        )
        make_model(doc)
