"""CART training for the hat-position baseline classifier.

Binary trees grown by greedy impurity minimization (Gini or entropy), with
candidate thresholds at midpoints between consecutive distinct feature
values and a left branch on feature <= threshold. Hyperparameters are
selected by grid search over seeded 5-fold cross-validation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .coco import write_text_atomic

GINI = "gini"
ENTROPY = "entropy"
CRITERIA = (GINI, ENTROPY)

DEFAULT_DEPTH_GRID = tuple(range(2, 16)) + (None,)
DEFAULT_MIN_SPLIT_GRID = (2, 5, 10, 14, 20)

TREE_FORMAT = "hatcheck-tree"
TREE_SCHEMA_VERSION = 1


def impurity(counts, criterion: str = GINI) -> float:
    """Gini impurity (1 - sum p^2) or entropy in bits (-sum p log2 p)."""
    total = sum(counts)
    if total <= 0:
        raise ValueError("impurity of an empty node is undefined")
    if criterion == GINI:
        return 1.0 - sum((c / total) ** 2 for c in counts)
    if criterion == ENTROPY:
        return -sum((c / total) * math.log2(c / total) for c in counts if c > 0)
    raise ValueError(f"unknown criterion {criterion!r}")


@dataclass(frozen=True)
class SplitNode:
    feature: int
    threshold: float
    left: int
    right: int
    decrease: float  # impurity decrease achieved by this split


@dataclass(frozen=True)
class LeafNode:
    label: str
    counts: tuple[tuple[str, int], ...]


@dataclass(frozen=True)
class FitParams:
    criterion: str = GINI
    max_depth: int | None = None
    min_samples_split: int = 2


@dataclass(frozen=True)
class DecisionTree:
    """A fitted tree: pre-order node array with the root at index 0."""

    criterion: str
    max_depth: int | None
    min_samples_split: int
    feature_names: tuple[str, ...]
    classes: tuple[str, ...]
    nodes: tuple[SplitNode | LeafNode, ...]

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_leaves(self) -> int:
        return sum(1 for n in self.nodes if isinstance(n, LeafNode))

    @property
    def n_internal(self) -> int:
        return self.n_nodes - self.n_leaves

    @property
    def depth(self) -> int:
        """Edges on the longest root-to-leaf path; a lone leaf has depth 0."""
        depths = {0: 0}
        deepest = 0
        for i, node in enumerate(self.nodes):
            if isinstance(node, SplitNode):
                depths[node.left] = depths[i] + 1
                depths[node.right] = depths[i] + 1
            else:
                deepest = max(deepest, depths[i])
        return deepest

    def predict_one(self, x) -> str:
        if len(x) != self.n_features:
            raise ValueError(
                f"feature vector has {len(x)} values, tree expects {self.n_features}"
            )
        node = self.nodes[0]
        while isinstance(node, SplitNode):
            node = self.nodes[node.left] if x[node.feature] <= node.threshold else self.nodes[node.right]
        return node.label

    def predict(self, X) -> list[str]:
        return [self.predict_one(row) for row in X]

    def to_dict(self) -> dict:
        nodes = []
        for node in self.nodes:
            if isinstance(node, SplitNode):
                nodes.append({
                    "type": "split",
                    "feature": node.feature,
                    "threshold": node.threshold,
                    "left": node.left,
                    "right": node.right,
                    "decrease": node.decrease,
                })
            else:
                nodes.append({
                    "type": "leaf",
                    "label": node.label,
                    "counts": dict(node.counts),
                })
        return {
            "format": TREE_FORMAT,
            "schema_version": TREE_SCHEMA_VERSION,
            "criterion": self.criterion,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "feature_names": list(self.feature_names),
            "classes": list(self.classes),
            "nodes": nodes,
        }

    def save(self, path) -> None:
        write_text_atomic(path, json.dumps(self.to_dict(), indent=2))

    @staticmethod
    def from_dict(payload: dict) -> "DecisionTree":
        if payload.get("format") != TREE_FORMAT:
            raise ValueError(f"not a {TREE_FORMAT} file")
        if payload.get("schema_version") != TREE_SCHEMA_VERSION:
            raise ValueError(f"unsupported tree schema version {payload.get('schema_version')!r}")
        nodes = []
        for rec in payload["nodes"]:
            if rec["type"] == "split":
                nodes.append(SplitNode(rec["feature"], rec["threshold"], rec["left"],
                                       rec["right"], rec.get("decrease", 0.0)))
            else:
                nodes.append(LeafNode(rec["label"], tuple(rec["counts"].items())))
        return DecisionTree(
            criterion=payload["criterion"],
            max_depth=payload["max_depth"],
            min_samples_split=payload["min_samples_split"],
            feature_names=tuple(payload["feature_names"]),
            classes=tuple(payload["classes"]),
            nodes=tuple(nodes),
        )


def load_tree(path) -> DecisionTree:
    with open(path, "r", encoding="utf-8") as fh:
        return DecisionTree.from_dict(json.load(fh))


def _counts_of(y, classes):
    return tuple(int(np.sum(y == c)) for c in classes)


def _majority(counts, classes, safe_label):
    top = max(counts)
    tied = [c for c, n in zip(classes, counts) if n == top]
    if safe_label in tied:
        return safe_label
    return min(tied)


def _best_split(X, y, classes, criterion):
    """Best (decrease, feature, threshold) over midpoint candidates, or None.

    Ties keep the first candidate encountered, i.e. the smallest feature
    index, then the smallest threshold, making fitting deterministic given
    input order.
    """
    n, d = X.shape
    parent = impurity(_counts_of(y, classes), criterion)
    index_of = {c: i for i, c in enumerate(classes)}
    class_idx = np.array([index_of[label] for label in y], dtype=int)
    best = None
    for j in range(d):
        order = np.argsort(X[:, j], kind="stable")
        col = X[order, j]
        labels = class_idx[order]
        left = np.zeros(len(classes), dtype=int)
        total = np.bincount(labels, minlength=len(classes))
        for i in range(n - 1):
            left[labels[i]] += 1
            if col[i + 1] == col[i]:
                continue
            threshold = (col[i] + col[i + 1]) / 2
            nl = i + 1
            nr = n - nl
            child = (nl * impurity(left, criterion)
                     + nr * impurity(total - left, criterion)) / n
            decrease = parent - child
            if best is None or decrease > best[0]:
                best = (decrease, j, threshold)
    if best is None or best[0] <= 0:
        return None
    return best


def fit(X, y, params: FitParams | None = None, *, criterion: str | None = None,
        max_depth: int | None = None, min_samples_split: int | None = None,
        feature_names=None, safe_label: str = "nonwearer") -> DecisionTree:
    """Grow a CART tree on feature vectors X and string labels y.

    Growth stops at pure nodes, at ``max_depth``, when a node holds fewer
    than ``min_samples_split`` samples, or when no candidate split strictly
    decreases impurity. Leaves take the majority label, ties falling to
    ``safe_label`` (the costly-error class) when it is among the tied.
    """
    if params is None:
        params = FitParams(
            criterion=criterion or GINI,
            max_depth=max_depth,
            min_samples_split=min_samples_split if min_samples_split is not None else 2,
        )
    if params.criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {params.criterion!r}")
    if params.min_samples_split < 2:
        raise ValueError("min_samples_split must be >= 2")

    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        X = X.reshape(len(X), -1)
    y = np.asarray(list(y), dtype=object)
    if len(X) != len(y):
        raise ValueError("features and labels differ in length")
    if len(y) == 0:
        raise ValueError("cannot fit on an empty training set")

    classes = tuple(sorted(set(y)))
    names = tuple(feature_names) if feature_names is not None else tuple(
        f"f{j}" for j in range(X.shape[1])
    )

    nodes: list = []

    def build(rows, depth) -> int:
        ysub = y[rows]
        counts = _counts_of(ysub, classes)
        label = _majority(counts, classes, safe_label)
        pure = sum(1 for c in counts if c > 0) <= 1
        can_split = (
            not pure
            and len(rows) >= params.min_samples_split
            and (params.max_depth is None or depth < params.max_depth)
        )
        split = _best_split(X[rows], ysub, classes, params.criterion) if can_split else None
        if split is None:
            nodes.append(LeafNode(label, tuple(zip(classes, counts))))
            return len(nodes) - 1
        decrease, j, threshold = split
        pos = len(nodes)
        nodes.append(None)  # reserve pre-order slot
        mask = X[rows, j] <= threshold
        left = build(rows[mask], depth + 1)
        right = build(rows[~mask], depth + 1)
        nodes[pos] = SplitNode(j, float(threshold), left, right, float(decrease))
        return pos

    build(np.arange(len(y)), 0)
    return DecisionTree(
        criterion=params.criterion,
        max_depth=params.max_depth,
        min_samples_split=params.min_samples_split,
        feature_names=names,
        classes=classes,
        nodes=tuple(nodes),
    )


@dataclass(frozen=True)
class GridSearchSpec:
    criteria: tuple[str, ...] = CRITERIA
    depths: tuple[int | None, ...] = DEFAULT_DEPTH_GRID
    min_splits: tuple[int, ...] = DEFAULT_MIN_SPLIT_GRID
    folds: int = 5
    seed: int = 0


@dataclass(frozen=True)
class CVRecord:
    params: FitParams
    fold_accuracies: tuple[float, ...]
    mean_accuracy: float


@dataclass(frozen=True)
class GridSearchResult:
    best: FitParams
    table: tuple[CVRecord, ...]
    fold_assignment: tuple[int, ...]  # fold index per training sample

    def to_csv(self) -> str:
        import csv, io

        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        n_folds = len(self.table[0].fold_accuracies) if self.table else 0
        writer.writerow(["criterion", "max_depth", "min_samples_split"]
                        + [f"fold{i}" for i in range(n_folds)] + ["mean_accuracy"])
        for rec in self.table:
            writer.writerow([
                rec.params.criterion,
                "" if rec.params.max_depth is None else rec.params.max_depth,
                rec.params.min_samples_split,
                *[repr(a) for a in rec.fold_accuracies],
                repr(rec.mean_accuracy),
            ])
        return buf.getvalue()


def grid_search(X, y, spec: GridSearchSpec | None = None,
                safe_label: str = "nonwearer") -> GridSearchResult:
    """Mean k-fold CV accuracy for every hyperparameter combination.

    Folds come from one seeded shuffle split into near-equal parts, reported
    in the result for reproducibility. Ties on mean accuracy prefer simpler
    trees: smaller depth, then larger min-split, then Gini.
    """
    if spec is None:
        spec = GridSearchSpec()
    X = np.asarray(X, dtype=float)
    y = np.asarray(list(y), dtype=object)
    n = len(y)
    if n < spec.folds:
        raise ValueError(f"need at least {spec.folds} samples for {spec.folds}-fold CV, got {n}")

    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n)
    folds = np.array_split(perm, spec.folds)
    assignment = np.empty(n, dtype=int)
    for k, fold in enumerate(folds):
        assignment[fold] = k

    table = []
    for criterion in spec.criteria:
        for depth in spec.depths:
            for m_s in spec.min_splits:
                params = FitParams(criterion, depth, m_s)
                accs = []
                for k in range(spec.folds):
                    test = folds[k]
                    train = np.concatenate([folds[i] for i in range(spec.folds) if i != k])
                    tree = fit(X[train], y[train], params, safe_label=safe_label)
                    pred = tree.predict(X[test])
                    accs.append(float(np.mean([p == t for p, t in zip(pred, y[test])])))
                table.append(CVRecord(params, tuple(accs), sum(accs) / len(accs)))

    def rank(rec: CVRecord):
        depth_key = math.inf if rec.params.max_depth is None else rec.params.max_depth
        return (-rec.mean_accuracy, depth_key, -rec.params.min_samples_split,
                CRITERIA.index(rec.params.criterion))

    best = min(table, key=rank).params
    return GridSearchResult(best, tuple(table), tuple(int(a) for a in assignment))
