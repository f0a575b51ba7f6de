"""Tree-ensemble data model, portable JSON exchange format, and inference.

The exchange document fixes the semantics importers have to agree on:

* every internal node tests ``value <= threshold`` on the left branch and
  ``value > threshold`` on the right branch (ties go left);
* classification leaves carry per-class probability vectors, regression
  leaves carry scalars;
* feature domains (``domain_min``/``domain_max``) are observed at training
  time and travel with the model, so later consumers never have to guess.

Models are immutable after loading.  The per-tree traversal arrays built at
construction time are read-only caches, so every operation here is safe to
call concurrently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

FORMAT_VERSION = "1"
TASKS = ("binary", "multiclass", "regression")
RELATION_LE = "<="
RELATION_GT = ">"

_LEAF_SUM_TOL = 1e-9


class ModelFormatError(ValueError):
    """A model document violates the exchange format or its invariants."""


@dataclass(frozen=True)
class FeatureSpec:
    """Declaration of one input column.

    ``one_hot_member`` columns are the 0/1 encoding of a single categorical
    value; ``group`` names the original categorical feature and
    ``member_value`` the encoded category.
    """

    id: int
    name: str
    kind: str = "numeric"
    group: str | None = None
    member_value: str | None = None
    domain_min: float = 0.0
    domain_max: float = 1.0

    def validate(self) -> None:
        if self.kind not in ("numeric", "one_hot_member"):
            raise ModelFormatError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "one_hot_member":
            if not self.group or self.member_value is None or self.member_value == "":
                raise ModelFormatError(
                    f"feature {self.name!r}: one_hot_member needs group and member_value"
                )
        else:
            if self.group is not None or self.member_value is not None:
                raise ModelFormatError(
                    f"feature {self.name!r}: numeric features carry no group/member_value"
                )
        if not (math.isfinite(self.domain_min) and math.isfinite(self.domain_max)):
            raise ModelFormatError(f"feature {self.name!r}: non-finite domain bounds")
        if self.domain_min > self.domain_max:
            raise ModelFormatError(f"feature {self.name!r}: domain_min > domain_max")


@dataclass(frozen=True)
class TreeNode:
    """One node of a decision tree: either a split or a leaf."""

    node_id: int
    feature: int | None = None
    threshold: float | None = None
    left: int | None = None
    right: int | None = None
    leaf_value: tuple[float, ...] | float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.leaf_value is not None

    def validate(self) -> None:
        split_fields = (self.feature, self.threshold, self.left, self.right)
        if self.is_leaf:
            if any(f is not None for f in split_fields):
                raise ModelFormatError(
                    f"node {self.node_id}: leaf must not carry split fields"
                )
        else:
            if any(f is None for f in split_fields):
                raise ModelFormatError(
                    f"node {self.node_id}: internal node needs feature, threshold, left, right"
                )
            if not math.isfinite(self.threshold):  # type: ignore[arg-type]
                raise ModelFormatError(f"node {self.node_id}: non-finite threshold")


@dataclass(frozen=True)
class TreeStats:
    """Extreme leaf predictions of one regression tree."""

    min_pred: float
    max_pred: float


@dataclass(frozen=True)
class PathCondition:
    feature_id: int
    relation: str  # "<=" or ">"
    threshold: float


@dataclass(frozen=True)
class DecisionPath:
    """Root-to-leaf condition conjunction one tree evaluated for an instance."""

    tree_index: int
    conditions: tuple[PathCondition, ...]
    vote: int | float

    def feature_ids(self) -> frozenset[int]:
        return frozenset(c.feature_id for c in self.conditions)


@dataclass(frozen=True)
class Prediction:
    task: str
    class_index: int | None = None
    probabilities: tuple[float, ...] | None = None
    value: float | None = None


class Tree:
    """A single decision tree with dense arrays for vectorized traversal."""

    __slots__ = (
        "nodes",
        "root_id",
        "node_ids",
        "_pos",
        "feature",
        "threshold",
        "left",
        "right",
        "leaf_scalar",
        "leaf_probs",
        "depth",
        "leaf_pos",
    )

    def __init__(self, nodes: Sequence[TreeNode], n_classes: int | None) -> None:
        by_id: dict[int, TreeNode] = {}
        for node in nodes:
            node.validate()
            if node.node_id in by_id:
                raise ModelFormatError(f"duplicate node_id {node.node_id}")
            by_id[node.node_id] = node

        referenced: dict[int, int] = {}
        for node in by_id.values():
            if node.is_leaf:
                continue
            for child in (node.left, node.right):
                if child not in by_id:
                    raise ModelFormatError(
                        f"node {node.node_id}: dangling child reference {child}"
                    )
                if child in referenced:
                    raise ModelFormatError(f"node {child} has more than one parent")
                referenced[child] = node.node_id

        roots = [nid for nid in by_id if nid not in referenced]
        if len(roots) != 1:
            raise ModelFormatError(
                f"tree must have exactly one root, found {len(roots)}"
            )
        self.root_id = roots[0]
        self.nodes = by_id
        self.node_ids = sorted(by_id)
        self._pos = {nid: i for i, nid in enumerate(self.node_ids)}

        n = len(self.node_ids)
        self.feature = np.full(n, -1, dtype=np.int64)
        self.threshold = np.zeros(n, dtype=np.float64)
        self.left = np.zeros(n, dtype=np.int64)
        self.right = np.zeros(n, dtype=np.int64)
        self.leaf_scalar = np.zeros(n, dtype=np.float64)
        if n_classes is not None:
            self.leaf_probs = np.zeros((n, n_classes), dtype=np.float64)
        else:
            self.leaf_probs = None
        leaf_pos = []
        for nid, node in by_id.items():
            pos = self._pos[nid]
            if node.is_leaf:
                leaf_pos.append(pos)
                if n_classes is not None:
                    value = node.leaf_value
                    if not isinstance(value, tuple):
                        raise ModelFormatError(
                            f"node {nid}: classification leaf needs a probability vector"
                        )
                    if len(value) != n_classes:
                        raise ModelFormatError(
                            f"node {nid}: leaf vector length {len(value)} != {n_classes} classes"
                        )
                    if any(not math.isfinite(v) or v < 0 for v in value):
                        raise ModelFormatError(f"node {nid}: leaf vector entries must be finite and >= 0")
                    if abs(sum(value) - 1.0) > _LEAF_SUM_TOL:
                        raise ModelFormatError(
                            f"node {nid}: leaf vector sums to {sum(value)!r}, expected 1"
                        )
                    self.leaf_probs[pos] = value
                else:
                    value = node.leaf_value
                    if isinstance(value, tuple):
                        raise ModelFormatError(
                            f"node {nid}: regression leaf needs a scalar value"
                        )
                    if not math.isfinite(value):
                        raise ModelFormatError(f"node {nid}: non-finite leaf value")
                    self.leaf_scalar[pos] = value
            else:
                self.feature[pos] = node.feature
                self.threshold[pos] = node.threshold
                self.left[pos] = self._pos[node.left]
                self.right[pos] = self._pos[node.right]
        self.leaf_pos = np.array(sorted(leaf_pos), dtype=np.int64)

        self.depth = self._check_reachable_and_depth()

    def _check_reachable_and_depth(self) -> int:
        seen = set()
        depth = 0
        stack = [(self._pos[self.root_id], 0)]
        while stack:
            pos, d = stack.pop()
            if pos in seen:
                raise ModelFormatError("cycle detected in tree")
            seen.add(pos)
            depth = max(depth, d)
            if self.feature[pos] >= 0:
                stack.append((self.left[pos], d + 1))
                stack.append((self.right[pos], d + 1))
        if len(seen) != len(self.node_ids):
            unreachable = len(self.node_ids) - len(seen)
            raise ModelFormatError(f"{unreachable} node(s) unreachable from root")
        return depth

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf positions for each row of ``X`` (level-synchronous descent)."""
        idx = np.full(X.shape[0], self._pos[self.root_id], dtype=np.int64)
        active = self.feature[idx] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            cur = idx[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            idx[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[idx] >= 0
        return idx

    def walk(self, x: np.ndarray) -> tuple[list[PathCondition], int]:
        """Conditions along the realized path and the final leaf position."""
        pos = self._pos[self.root_id]
        conditions: list[PathCondition] = []
        while self.feature[pos] >= 0:
            fid = int(self.feature[pos])
            thr = float(self.threshold[pos])
            if x[fid] <= thr:
                conditions.append(PathCondition(fid, RELATION_LE, thr))
                pos = int(self.left[pos])
            else:
                conditions.append(PathCondition(fid, RELATION_GT, thr))
                pos = int(self.right[pos])
        return conditions, pos

    def leaf_values(self) -> np.ndarray:
        """Payloads of all leaves: (L, C) probabilities or (L,) scalars."""
        if self.leaf_probs is not None:
            return self.leaf_probs[self.leaf_pos]
        return self.leaf_scalar[self.leaf_pos]


@dataclass(frozen=True)
class ForestModel:
    task: str
    classes: tuple[str, ...] | None
    features: tuple[FeatureSpec, ...]
    trees: tuple[Tree, ...]
    tree_stats: tuple[TreeStats, ...] | None

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_classes(self) -> int:
        return len(self.classes) if self.classes else 0

    @property
    def is_classification(self) -> bool:
        return self.task != "regression"


def _validate_features(features: Sequence[FeatureSpec]) -> None:
    names = set()
    group_values: dict[str, set[str]] = {}
    for i, spec in enumerate(features):
        spec.validate()
        if spec.id != i:
            raise ModelFormatError(
                f"feature ids must be contiguous positions; got id {spec.id} at index {i}"
            )
        if spec.name in names:
            raise ModelFormatError(f"duplicate feature name {spec.name!r}")
        names.add(spec.name)
        if spec.kind == "one_hot_member":
            values = group_values.setdefault(spec.group, set())  # type: ignore[arg-type]
            if spec.member_value in values:
                raise ModelFormatError(
                    f"group {spec.group!r}: duplicate member value {spec.member_value!r}"
                )
            values.add(spec.member_value)  # type: ignore[arg-type]
    for group in group_values:
        if group in names:
            raise ModelFormatError(f"group name {group!r} collides with a feature name")


def _tree_extrema(tree: Tree) -> TreeStats:
    values = tree.leaf_scalar[tree.leaf_pos]
    return TreeStats(min_pred=float(values.min()), max_pred=float(values.max()))


def build_model(
    task: str,
    features: Sequence[FeatureSpec],
    trees: Sequence[Tree],
    classes: Sequence[str] | None = None,
    tree_stats: Sequence[TreeStats] | None = None,
) -> ForestModel:
    """Assemble and validate a ForestModel from already-built trees."""
    if task not in TASKS:
        raise ModelFormatError(f"unknown task {task!r}")
    if not trees:
        raise ModelFormatError("a forest needs at least one tree")
    _validate_features(features)
    n_features = len(features)
    for tree in trees:
        used = tree.feature[tree.feature >= 0]
        if used.size and (used.min() < 0 or used.max() >= n_features):
            raise ModelFormatError("tree references a feature id outside the feature table")
    if task == "regression":
        if classes is not None:
            raise ModelFormatError("regression models carry no class list")
        recomputed = tuple(_tree_extrema(t) for t in trees)
        if tree_stats is not None:
            if len(tree_stats) != len(trees):
                raise ModelFormatError("tree_stats length mismatch")
            for i, (stored, fresh) in enumerate(zip(tree_stats, recomputed)):
                if stored.min_pred != fresh.min_pred or stored.max_pred != fresh.max_pred:
                    raise ModelFormatError(
                        f"tree {i}: stored stats {stored} disagree with leaf extrema {fresh}"
                    )
        stats: tuple[TreeStats, ...] | None = recomputed
    else:
        if classes is None or len(classes) < 2:
            raise ModelFormatError("classification models need at least two classes")
        if task == "binary" and len(classes) != 2:
            raise ModelFormatError("binary task requires exactly two classes")
        if len(set(classes)) != len(classes):
            raise ModelFormatError("duplicate class labels")
        if tree_stats is not None:
            raise ModelFormatError("tree_stats apply to regression models only")
        stats = None
    return ForestModel(
        task=task,
        classes=tuple(classes) if classes is not None else None,
        features=tuple(features),
        trees=tuple(trees),
        tree_stats=stats,
    )


def _node_from_dict(doc: Mapping, task: str) -> TreeNode:
    relation = doc.get("relation")
    if relation is not None and relation != RELATION_LE:
        raise ModelFormatError(
            f"node {doc.get('node_id')}: relation {relation!r} not supported; "
            "left branches always test '<='"
        )
    leaf_value = doc.get("leaf_value")
    if leaf_value is not None:
        if task == "regression":
            if isinstance(leaf_value, (list, tuple)):
                raise ModelFormatError("regression leaf must be a scalar")
            leaf_value = float(leaf_value)
        else:
            if not isinstance(leaf_value, (list, tuple)):
                raise ModelFormatError("classification leaf must be a probability vector")
            leaf_value = tuple(float(v) for v in leaf_value)
    return TreeNode(
        node_id=int(doc["node_id"]),
        feature=None if doc.get("feature") is None else int(doc["feature"]),
        threshold=None if doc.get("threshold") is None else float(doc["threshold"]),
        left=None if doc.get("left") is None else int(doc["left"]),
        right=None if doc.get("right") is None else int(doc["right"]),
        leaf_value=leaf_value,
    )


def load_model(data: bytes | str | Mapping) -> ForestModel:
    """Parse and validate an exchange-format model document."""
    if isinstance(data, (bytes, str)):
        try:
            doc = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"malformed model document: {exc}") from exc
    else:
        doc = data
    if not isinstance(doc, Mapping):
        raise ModelFormatError("model document must be a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported format_version {doc.get('format_version')!r}"
        )
    task = doc.get("task")
    if task not in TASKS:
        raise ModelFormatError(f"unknown task {task!r}")

    try:
        features = [
            FeatureSpec(
                id=int(f["id"]),
                name=str(f["name"]),
                kind=str(f.get("kind", "numeric")),
                group=f.get("group"),
                member_value=f.get("member_value"),
                domain_min=float(f["domain_min"]),
                domain_max=float(f["domain_max"]),
            )
            for f in doc["features"]
        ]
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed feature table: {exc}") from exc

    n_classes = None
    classes = None
    if task != "regression":
        classes = doc.get("classes")
        if not classes:
            raise ModelFormatError("classification model needs a class list")
        classes = [str(c) for c in classes]
        n_classes = len(classes)

    trees = []
    try:
        tree_docs = doc["trees"]
    except KeyError as exc:
        raise ModelFormatError("model document lacks trees") from exc
    for tdoc in tree_docs:
        nodes = [_node_from_dict(nd, task) for nd in tdoc["nodes"]]
        trees.append(Tree(nodes, n_classes))

    stats = None
    if doc.get("tree_stats") is not None:
        stats = [
            TreeStats(min_pred=float(s["min_pred"]), max_pred=float(s["max_pred"]))
            for s in doc["tree_stats"]
        ]
    return build_model(task, features, trees, classes=classes, tree_stats=stats)


def model_to_dict(model: ForestModel) -> dict:
    features = []
    for f in model.features:
        entry: dict = {
            "id": f.id,
            "name": f.name,
            "kind": f.kind,
            "domain_min": f.domain_min,
            "domain_max": f.domain_max,
        }
        if f.kind == "one_hot_member":
            entry["group"] = f.group
            entry["member_value"] = f.member_value
        features.append(entry)
    trees = []
    for tree in model.trees:
        nodes = []
        for nid in tree.node_ids:
            node = tree.nodes[nid]
            if node.is_leaf:
                value = node.leaf_value
                nodes.append(
                    {
                        "node_id": nid,
                        "leaf_value": list(value) if isinstance(value, tuple) else value,
                    }
                )
            else:
                nodes.append(
                    {
                        "node_id": nid,
                        "feature": node.feature,
                        "threshold": node.threshold,
                        "left": node.left,
                        "right": node.right,
                    }
                )
        trees.append({"nodes": nodes})
    doc: dict = {"format_version": FORMAT_VERSION, "task": model.task}
    if model.classes is not None:
        doc["classes"] = list(model.classes)
    doc["features"] = features
    doc["trees"] = trees
    if model.tree_stats is not None:
        doc["tree_stats"] = [
            {"min_pred": s.min_pred, "max_pred": s.max_pred} for s in model.tree_stats
        ]
    return doc


def serialize_model(model: ForestModel) -> str:
    """JSON text for the model; floats keep full round-trip precision."""
    return json.dumps(model_to_dict(model), indent=1)


def validate_instance(model: ForestModel, instance: Sequence[float]) -> np.ndarray:
    x = np.asarray(instance, dtype=np.float64)
    if x.shape != (model.n_features,):
        raise ValueError(
            f"instance has {x.shape} values, model expects {model.n_features}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("instance contains non-finite values")
    return x


def validate_matrix(model: ForestModel, X: Sequence[Sequence[float]]) -> np.ndarray:
    mat = np.asarray(X, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] != model.n_features:
        raise ValueError(f"expected a (n, {model.n_features}) matrix, got {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValueError("matrix contains non-finite values")
    return mat


def predict_batch(model: ForestModel, X: Sequence[Sequence[float]]) -> np.ndarray:
    """Soft-vote means: (n, C) class probabilities, or (n,) regression values."""
    mat = validate_matrix(model, X)
    if model.is_classification:
        acc = np.zeros((mat.shape[0], model.n_classes), dtype=np.float64)
        for tree in model.trees:
            acc += tree.leaf_probs[tree.apply(mat)]
        return acc / len(model.trees)
    acc = np.zeros(mat.shape[0], dtype=np.float64)
    for tree in model.trees:
        acc += tree.leaf_scalar[tree.apply(mat)]
    return acc / len(model.trees)


def predict(model: ForestModel, instance: Sequence[float]) -> Prediction:
    """Classification: argmax of the mean leaf vectors.  Regression: mean."""
    x = validate_instance(model, instance)
    out = predict_batch(model, x[None, :])
    if model.is_classification:
        probs = out[0]
        return Prediction(
            task=model.task,
            class_index=int(np.argmax(probs)),
            probabilities=tuple(float(p) for p in probs),
        )
    return Prediction(task=model.task, value=float(out[0]))


def per_tree_probabilities(model: ForestModel, instance: Sequence[float]) -> np.ndarray:
    """(T, C) leaf probability vectors each tree lands on for the instance."""
    if not model.is_classification:
        raise ValueError("per-tree probabilities apply to classification models")
    x = validate_instance(model, instance)
    rows = [tree.leaf_probs[tree.apply(x[None, :])[0]] for tree in model.trees]
    return np.array(rows, dtype=np.float64)


def per_tree_values(model: ForestModel, instance: Sequence[float]) -> np.ndarray:
    """(T,) scalar predictions of each regression tree for the instance."""
    if model.is_classification:
        raise ValueError("per-tree values apply to regression models")
    x = validate_instance(model, instance)
    return np.array(
        [tree.leaf_scalar[tree.apply(x[None, :])[0]] for tree in model.trees],
        dtype=np.float64,
    )


def extract_paths(model: ForestModel, instance: Sequence[float]) -> list[DecisionPath]:
    """One realized root-to-leaf path per tree, in tree order."""
    x = validate_instance(model, instance)
    paths = []
    for t, tree in enumerate(model.trees):
        conditions, leaf = tree.walk(x)
        if model.is_classification:
            vote: int | float = int(np.argmax(tree.leaf_probs[leaf]))
        else:
            vote = float(tree.leaf_scalar[leaf])
        paths.append(DecisionPath(tree_index=t, conditions=tuple(conditions), vote=vote))
    return paths


def path_interval(path: DecisionPath, feature_id: int) -> tuple[float, float] | None:
    """Half-open interval (lower, upper] the path imposes on one feature.

    ``lower`` is the max of the strict ``>`` thresholds (or -inf), ``upper``
    the min of the ``<=`` thresholds (or +inf).  None when the path never
    tests the feature.
    """
    lower = -math.inf
    upper = math.inf
    present = False
    for cond in path.conditions:
        if cond.feature_id != feature_id:
            continue
        present = True
        if cond.relation == RELATION_GT:
            lower = max(lower, cond.threshold)
        else:
            upper = min(upper, cond.threshold)
    if not present:
        return None
    return lower, upper


def feature_thresholds(model: ForestModel, feature_id: int) -> list[float]:
    """Sorted distinct split thresholds on one feature over all trees."""
    values: set[float] = set()
    for tree in model.trees:
        mask = tree.feature == feature_id
        values.update(float(v) for v in tree.threshold[mask])
    return sorted(values)


def one_hot_groups(features: Iterable[FeatureSpec]) -> dict[str, list[FeatureSpec]]:
    """Group name -> member specs, in feature-id order."""
    groups: dict[str, list[FeatureSpec]] = {}
    for spec in features:
        if spec.kind == "one_hot_member":
            groups.setdefault(spec.group, []).append(spec)  # type: ignore[arg-type]
    return groups
