import numpy as np
import pytest

from _factories import banknote_like

from conclusive_forest import (
    TrainConfig,
    TrainingError,
    predict,
    predict_batch,
    serialize_model,
    train,
)
from conclusive_forest.model import model_to_dict
from conclusive_forest.scoring import weighted_f1


def test_linearly_separable_points():
    X = np.array([[0.0], [0.1], [0.9], [1.0]])
    y = ["a", "a", "b", "b"]
    model = train(X, y, "binary", TrainConfig(n_estimators=1, max_depth=1, bootstrap=False))
    for xi, yi in zip(X, y):
        assert model.classes[predict(model, xi).class_index] == yi


def test_fixed_seed_is_byte_identical():
    X, y = banknote_like(seed=0, n=150)
    cfg = TrainConfig(n_estimators=8, max_depth=5, max_features=0.75, seed=42)
    a = serialize_model(train(X, y, "binary", cfg))
    b = serialize_model(train(X, y, "binary", cfg))
    assert a == b


def test_different_seed_differs():
    X, y = banknote_like(seed=0, n=150)
    a = serialize_model(train(X, y, "binary", TrainConfig(n_estimators=5, seed=1)))
    b = serialize_model(train(X, y, "binary", TrainConfig(n_estimators=5, seed=2)))
    assert a != b


def test_paper_style_config_reaches_high_f1():
    X, y = banknote_like(seed=3)
    cfg = TrainConfig(
        n_estimators=60, max_depth=10, max_features=0.75, min_samples_leaf=1,
        bootstrap=True, seed=7,
    )
    model = train(X, y, "binary", cfg)
    index = {c: i for i, c in enumerate(model.classes)}
    y_idx = np.array([index[v] for v in y])
    pred = np.argmax(predict_batch(model, X), axis=1)
    assert weighted_f1(y_idx, pred, 2) > 0.95


def _leaf_row_counts(model, tree, X):
    leaves = tree.apply(np.asarray(X, dtype=np.float64))
    counts = {}
    for pos in leaves:
        counts[int(pos)] = counts.get(int(pos), 0) + 1
    return counts


def test_max_depth_and_min_samples_leaf_respected():
    X, y = banknote_like(seed=5, n=300)
    cfg = TrainConfig(
        n_estimators=6, max_depth=4, min_samples_leaf=7, bootstrap=False, seed=0
    )
    model = train(X, y, "binary", cfg)
    for tree in model.trees:
        assert tree.depth <= 4
        # bootstrap=False: every tree saw exactly the full training set
        counts = _leaf_row_counts(model, tree, X)
        assert all(c >= 7 for pos, c in counts.items())
        assert set(counts) == set(int(p) for p in tree.leaf_pos)


def test_no_bootstrap_all_features_gives_identical_trees():
    X, y = banknote_like(seed=1, n=200)
    cfg = TrainConfig(n_estimators=4, max_features="all", bootstrap=False, seed=0)
    doc = model_to_dict(train(X, y, "binary", cfg))
    first = doc["trees"][0]
    assert all(t == first for t in doc["trees"][1:])


def test_regression_training_and_stats():
    rng = np.random.default_rng(2)
    X = rng.uniform(size=(120, 3))
    y = 2 * X[:, 0] - X[:, 1]
    model = train(X, y, "regression", TrainConfig(n_estimators=5, max_depth=4, seed=1))
    assert model.tree_stats is not None and len(model.tree_stats) == 5
    for tree, stats in zip(model.trees, model.tree_stats):
        values = tree.leaf_scalar[tree.leaf_pos]
        assert stats.min_pred == values.min()
        assert stats.max_pred == values.max()
    # decent fit on smooth data
    resid = np.abs(predict_batch(model, X) - y)
    assert resid.mean() < 0.25


def test_feature_domains_observed_from_data():
    X = np.array([[0.0, 5.0], [2.0, 7.0], [1.0, 6.0]])
    model = train(X, [1.0, 2.0, 3.0], "regression", TrainConfig(n_estimators=1))
    assert model.features[0].domain_min == 0.0
    assert model.features[0].domain_max == 2.0
    assert model.features[1].domain_min == 5.0
    assert model.features[1].domain_max == 7.0


def test_max_features_variants_run():
    X, y = banknote_like(seed=9, n=120)
    for mf in ("sqrt", "log2", 0.5, "all"):
        model = train(X, y, "binary", TrainConfig(n_estimators=3, max_features=mf, seed=1))
        assert len(model.trees) == 3


def test_training_errors():
    X = np.zeros((4, 2))
    with pytest.raises(TrainingError, match="distinct"):
        train(X, ["a", "a", "a", "a"], "binary", TrainConfig(n_estimators=1))
    with pytest.raises(TrainingError, match="non-empty"):
        train(np.zeros((0, 2)), [], "binary", TrainConfig(n_estimators=1))
    with pytest.raises(TrainingError, match="n_estimators"):
        train(X, ["a", "b", "a", "b"], "binary", TrainConfig(n_estimators=0))
    with pytest.raises(TrainingError, match="fractional"):
        train(X, ["a", "b", "a", "b"], "binary", TrainConfig(n_estimators=1, max_features=1.5))
    with pytest.raises(TrainingError, match="non-finite"):
        train(np.array([[np.nan]]), [1.0], "regression", TrainConfig(n_estimators=1))
    with pytest.raises(TrainingError, match="exactly 2"):
        train(X, ["a", "b", "c", "a"], "binary", TrainConfig(n_estimators=1))


def test_class_order_numeric_aware():
    X = np.array([[float(i)] for i in range(12)])
    y = ["10", "2", "1"] * 4
    model = train(X, y, "multiclass", TrainConfig(n_estimators=1))
    assert model.classes == ("1", "2", "10")
