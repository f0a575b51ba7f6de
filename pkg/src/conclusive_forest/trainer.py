"""Minimal bagged-CART trainer producing exchange-format forests.

Deliberately small: Gini splits for classification, variance-reduction
splits for regression, bootstrap sampling, per-node feature subsampling.
Split thresholds are midpoints between consecutive distinct sorted values
and impurity ties break on the lowest feature id, then lowest threshold,
so a fixed seed yields a byte-identical serialized model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import (
    FeatureSpec,
    ForestModel,
    Tree,
    TreeNode,
    build_model,
)


class TrainingError(ValueError):
    """Bad training data or configuration."""


@dataclass(frozen=True)
class TrainConfig:
    n_estimators: int = 100
    max_depth: int | None = None
    max_features: float | str = "all"  # "sqrt" | "log2" | fraction in (0,1] | "all"
    min_samples_leaf: int = 1
    bootstrap: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.n_estimators < 1:
            raise TrainingError("n_estimators must be >= 1")
        if self.min_samples_leaf < 1:
            raise TrainingError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise TrainingError("max_depth must be >= 1 when set")
        if isinstance(self.max_features, str):
            if self.max_features not in ("sqrt", "log2", "all"):
                raise TrainingError(f"unknown max_features {self.max_features!r}")
        else:
            if not (0.0 < float(self.max_features) <= 1.0):
                raise TrainingError("fractional max_features must lie in (0, 1]")

    def features_per_split(self, n_features: int) -> int:
        if self.max_features == "all":
            return n_features
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        if self.max_features == "log2":
            return max(1, int(math.log2(n_features)))
        return max(1, min(n_features, int(float(self.max_features) * n_features)))


def _class_weights(y_idx: np.ndarray, n_classes: int) -> np.ndarray:
    return np.bincount(y_idx, minlength=n_classes).astype(np.float64)


def _best_split_classification(
    X: np.ndarray, y_idx: np.ndarray, rows: np.ndarray, feats: np.ndarray,
    n_classes: int, min_leaf: int,
):
    """(weighted child impurity, fid, threshold) or None; ties keep the
    lowest feature id then lowest threshold (feats must be ascending)."""
    best = None
    n = rows.size
    y_local = y_idx[rows]
    onehot = np.zeros((n, n_classes), dtype=np.float64)
    onehot[np.arange(n), y_local] = 1.0
    for fid in feats:
        col = X[rows, fid]
        order = np.argsort(col, kind="stable")
        vals = col[order]
        cum = np.cumsum(onehot[order], axis=0)
        total = cum[-1]
        # boundary i splits into left [0, i) / right [i, n)
        boundaries = np.nonzero(vals[1:] > vals[:-1])[0] + 1
        if boundaries.size == 0:
            continue
        valid = (boundaries >= min_leaf) & (n - boundaries >= min_leaf)
        boundaries = boundaries[valid]
        if boundaries.size == 0:
            continue
        left = cum[boundaries - 1]
        right = total[None, :] - left
        nl = boundaries.astype(np.float64)
        nr = n - nl
        gini_l = 1.0 - np.sum((left / nl[:, None]) ** 2, axis=1)
        gini_r = 1.0 - np.sum((right / nr[:, None]) ** 2, axis=1)
        weighted = (nl * gini_l + nr * gini_r) / n
        i = int(np.argmin(weighted))  # argmin keeps the lowest threshold on ties
        score = float(weighted[i])
        if best is None or score < best[0]:
            b = boundaries[i]
            thr = (float(vals[b - 1]) + float(vals[b])) / 2.0
            best = (score, int(fid), thr)
    return best


def _best_split_regression(
    X: np.ndarray, y: np.ndarray, rows: np.ndarray, feats: np.ndarray, min_leaf: int,
):
    best = None
    n = rows.size
    y_local = y[rows]
    for fid in feats:
        col = X[rows, fid]
        order = np.argsort(col, kind="stable")
        vals = col[order]
        ys = y_local[order]
        cum = np.cumsum(ys)
        cum2 = np.cumsum(ys * ys)
        total, total2 = cum[-1], cum2[-1]
        boundaries = np.nonzero(vals[1:] > vals[:-1])[0] + 1
        if boundaries.size == 0:
            continue
        valid = (boundaries >= min_leaf) & (n - boundaries >= min_leaf)
        boundaries = boundaries[valid]
        if boundaries.size == 0:
            continue
        nl = boundaries.astype(np.float64)
        nr = n - nl
        sl, sl2 = cum[boundaries - 1], cum2[boundaries - 1]
        sr, sr2 = total - sl, total2 - sl2
        # n * variance = sum(y^2) - sum(y)^2 / n, per side
        sse = (sl2 - sl * sl / nl) + (sr2 - sr * sr / nr)
        i = int(np.argmin(sse))
        score = float(sse[i])
        if best is None or score < best[0]:
            b = boundaries[i]
            thr = (float(vals[b - 1]) + float(vals[b])) / 2.0
            best = (score, int(fid), thr)
    return best


class _TreeBuilder:
    def __init__(self, X, y, task, n_classes, config, rng):
        self.X = X
        self.y = y
        self.task = task
        self.n_classes = n_classes
        self.config = config
        self.rng = rng
        self.nodes: list[TreeNode] = []

    def _leaf(self, rows: np.ndarray) -> int:
        nid = len(self.nodes)
        if self.task == "regression":
            value: tuple[float, ...] | float = float(np.mean(self.y[rows]))
        else:
            counts = _class_weights(self.y[rows], self.n_classes)
            value = tuple(counts / counts.sum())
        self.nodes.append(TreeNode(node_id=nid, leaf_value=value))
        return nid

    def _candidate_features(self) -> np.ndarray:
        n_features = self.X.shape[1]
        m = self.config.features_per_split(n_features)
        if m >= n_features:
            return np.arange(n_features)
        picked = self.rng.choice(n_features, size=m, replace=False)
        return np.sort(picked)

    def build(self, rows: np.ndarray, depth: int) -> int:
        cfg = self.config
        y_node = self.y[rows]
        pure = np.all(y_node == y_node[0])
        if (
            pure
            or rows.size < 2 * cfg.min_samples_leaf
            or (cfg.max_depth is not None and depth >= cfg.max_depth)
        ):
            return self._leaf(rows)
        feats = self._candidate_features()
        if self.task == "regression":
            best = _best_split_regression(self.X, self.y, rows, feats, cfg.min_samples_leaf)
        else:
            best = _best_split_classification(
                self.X, self.y, rows, feats, self.n_classes, cfg.min_samples_leaf
            )
        if best is None:
            return self._leaf(rows)
        _, fid, thr = best
        col = self.X[rows, fid]
        left_rows = rows[col <= thr]
        right_rows = rows[col > thr]
        nid = len(self.nodes)
        self.nodes.append(TreeNode(node_id=nid, leaf_value=None))  # placeholder
        left = self.build(left_rows, depth + 1)
        right = self.build(right_rows, depth + 1)
        self.nodes[nid] = TreeNode(
            node_id=nid, feature=fid, threshold=thr, left=left, right=right
        )
        return nid


def train(
    X: Sequence[Sequence[float]],
    y: Sequence,
    task: str,
    config: TrainConfig,
    features: Sequence[FeatureSpec] | None = None,
) -> ForestModel:
    """Train a bagged forest; deterministic for a fixed config seed.

    Tree ``t`` uses its own generator seeded with ``seed + t``, so trees can
    be grown in parallel without changing the result.
    """
    config.validate()
    mat = np.asarray(X, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] == 0 or mat.shape[1] == 0:
        raise TrainingError("training data must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(mat)):
        raise TrainingError("training data contains non-finite values")
    n, n_features = mat.shape

    classes: list[str] | None = None
    if task == "regression":
        target = np.asarray(y, dtype=np.float64)
        if target.shape != (n,):
            raise TrainingError("target length mismatch")
        if not np.all(np.isfinite(target)):
            raise TrainingError("target contains non-finite values")
        if n < 2:
            raise TrainingError("regression needs at least 2 rows")
        y_enc = target
        n_classes = None
    elif task in ("binary", "multiclass"):
        labels = [str(v) for v in y]
        if len(labels) != n:
            raise TrainingError("target length mismatch")
        classes = sorted(set(labels), key=_label_sort_key)
        if len(classes) < 2:
            raise TrainingError("classification needs at least 2 distinct target values")
        if task == "binary" and len(classes) != 2:
            raise TrainingError(f"binary task requires exactly 2 classes, got {len(classes)}")
        index = {c: i for i, c in enumerate(classes)}
        y_enc = np.array([index[v] for v in labels], dtype=np.int64)
        n_classes = len(classes)
    else:
        raise TrainingError(f"unknown task {task!r}")

    if features is None:
        features = [
            FeatureSpec(
                id=j,
                name=f"f{j}",
                domain_min=float(mat[:, j].min()),
                domain_max=float(mat[:, j].max()),
            )
            for j in range(n_features)
        ]
    elif len(features) != n_features:
        raise TrainingError("feature spec count does not match the data width")

    trees = []
    for t in range(config.n_estimators):
        rng = np.random.default_rng(config.seed + t)
        if config.bootstrap:
            rows = np.sort(rng.integers(0, n, size=n))
        else:
            rows = np.arange(n)
        builder = _TreeBuilder(mat, y_enc, task, n_classes, config, rng)
        builder.build(rows, 0)
        trees.append(Tree(builder.nodes, n_classes))

    return build_model(task, list(features), trees, classes=classes)


def _label_sort_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)
