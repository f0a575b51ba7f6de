"""Shared test fixtures: hand-built model documents, random model
generators, and synthetic datasets shaped like small public tabular sets."""

from __future__ import annotations

import json

import numpy as np

from conclusive_forest import load_model


def split(node_id, feature, threshold, left, right):
    return {
        "node_id": node_id,
        "feature": feature,
        "threshold": threshold,
        "left": left,
        "right": right,
    }


def leaf(node_id, value):
    return {"node_id": node_id, "leaf_value": value}


def numeric_features(n, lo=0.0, hi=1.0, names=None):
    return [
        {
            "id": j,
            "name": names[j] if names else f"f{j}",
            "kind": "numeric",
            "domain_min": lo,
            "domain_max": hi,
        }
        for j in range(n)
    ]


def model_doc(task, features, trees, classes=None, tree_stats=None):
    doc = {"format_version": "1", "task": task, "features": features, "trees": trees}
    if classes is not None:
        doc["classes"] = classes
    if tree_stats is not None:
        doc["tree_stats"] = tree_stats
    return doc


def make_model(doc):
    return load_model(json.dumps(doc))


def stump(feature, threshold, left_value, right_value):
    """Single-split tree document."""
    return {
        "nodes": [
            split(0, feature, threshold, 1, 2),
            leaf(1, left_value),
            leaf(2, right_value),
        ]
    }


def constant_tree(value):
    return {"nodes": [leaf(0, value)]}


def hard_vote_model(n_trees, majority, n_features=1, threshold=0.5):
    """Binary model with pure {0,1} leaves: ``majority`` trees vote class 1
    left of the threshold, the rest vote class 0 there."""
    trees = []
    for t in range(n_trees):
        if t < majority:
            trees.append(stump(0, threshold, [0.0, 1.0], [1.0, 0.0]))
        else:
            trees.append(stump(0, threshold, [1.0, 0.0], [0.0, 1.0]))
    return make_model(
        model_doc(
            "binary", numeric_features(n_features), trees, classes=["a", "b"]
        )
    )


def random_tree_doc(rng, n_features, depth, leaf_factory, lattice=None):
    """Random binary tree document; thresholds drawn uniformly in (0, 1)
    or from a lattice when given."""
    nodes = []
    counter = [0]

    def grow(d):
        nid = counter[0]
        counter[0] += 1
        if d == 0 or rng.random() < 0.25:
            nodes.append(leaf(nid, leaf_factory()))
            return nid
        if lattice is not None:
            threshold = float(rng.choice(lattice))
        else:
            threshold = float(rng.uniform(0.05, 0.95))
        feature = int(rng.integers(n_features))
        placeholder = len(nodes)
        nodes.append(None)
        left = grow(d - 1)
        right = grow(d - 1)
        nodes[placeholder] = split(nid, feature, threshold, left, right)
        return nid

    grow(depth)
    return {"nodes": [n for n in nodes if n is not None]}


def random_classification_model(rng, n_trees, n_features, n_classes, depth=3, lattice=None):
    def leaf_factory():
        raw = rng.dirichlet(np.ones(n_classes))
        vec = np.round(raw, 6)
        vec[-1] = 1.0 - vec[:-1].sum()
        return [float(v) for v in vec]

    trees = [
        random_tree_doc(rng, n_features, depth, leaf_factory, lattice)
        for _ in range(n_trees)
    ]
    classes = [f"c{i}" for i in range(n_classes)]
    task = "binary" if n_classes == 2 else "multiclass"
    return make_model(
        model_doc(task, numeric_features(n_features), trees, classes=classes)
    )


def random_regression_model(rng, n_trees, n_features, depth=3, lattice=None):
    def leaf_factory():
        return float(np.round(rng.uniform(-10, 10), 6))

    trees = [
        random_tree_doc(rng, n_features, depth, leaf_factory, lattice)
        for _ in range(n_trees)
    ]
    return make_model(model_doc("regression", numeric_features(n_features), trees))


# ---------------------------------------------------------------------------
# synthetic datasets shaped like the usual small tabular benchmarks


def banknote_like(seed, n=1372, n_features=4):
    """Binary, 4 numeric features in [-1, 1]; two informative columns."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, n_features))
    score = 1.4 * X[:, 0] + X[:, 1] + 0.15 * X[:, 2]
    y = np.where(score > 0.0, "fake", "real")
    return X, list(y)


def glass_like(seed, n=214, n_features=9, n_classes=6):
    """Multi-class blobs: 6 well-separated Gaussian clusters in 9-d."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-4.0, 4.0, size=(n_classes, n_features))
    labels = rng.integers(n_classes, size=n)
    X = centers[labels] + rng.normal(scale=0.8, size=(n, n_features))
    return X, [f"g{int(v)}" for v in labels]


def wine_like(seed, n=4898, n_features=12):
    """Regression: smooth nonlinear target over [0, 1]^12 plus noise."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, n_features))
    y = (
        5.0
        + 2.0 * X[:, 0]
        - 1.5 * X[:, 1]
        + np.sin(3.0 * X[:, 2])
        + 0.5 * X[:, 3] * X[:, 4]
        + rng.normal(scale=0.15, size=n)
    )
    return X, y
