"""Greedy axis-aligned CART with scalar leaves, the weakest baseline."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .tree import FORMAT_VERSION, PREPROCESSING_KEYS, TreeFormatError, TreeTopology, check_header


@dataclass(frozen=True, eq=False)
class AxisTree:
    """Binary tree of ``x[feature] > threshold`` tests; ties go left.

    Node and leaf numbering follows the order in which the fit created them
    (breadth first). ``values`` holds leaf means for regression and class
    indices for classification.
    """

    topology: TreeTopology
    feature: np.ndarray
    threshold: np.ndarray
    values: np.ndarray
    task: str
    n_classes: int = None
    max_depth: int = None
    preprocessing: dict = field(default_factory=dict)

    def __post_init__(self):
        feature = np.array(self.feature, dtype=np.int64).reshape(-1)
        threshold = np.array(self.threshold, dtype=np.float64).reshape(-1)
        dtype = np.int64 if self.task == "classify" else np.float64
        values = np.array(self.values, dtype=dtype).reshape(-1)
        if self.task not in ("classify", "regress"):
            raise TreeFormatError(f"unknown task {self.task!r}")
        if feature.shape[0] != self.topology.m or threshold.shape[0] != self.topology.m:
            raise TreeFormatError("one feature and one threshold per internal node required")
        if values.shape[0] != self.topology.n:
            raise TreeFormatError(f"expected {self.topology.n} leaf values, found {values.shape[0]}")
        if np.any(feature < 0):
            raise TreeFormatError("feature indices must be >= 0")
        if not np.all(np.isfinite(threshold)) or not np.all(np.isfinite(values)):
            raise TreeFormatError("thresholds and leaf values must be finite")
        for name, arr in (("feature", feature), ("threshold", threshold), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return self.topology.m

    @property
    def n(self) -> int:
        return self.topology.n

    def route(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if self.m and X.shape[1] <= self.feature.max():
            raise ValueError(f"tree tests feature {self.feature.max()} but x has {X.shape[1]}")
        N = X.shape[0]
        node = np.zeros(N, dtype=np.int64)
        if self.m == 0:
            return 0 if single else node
        active = np.arange(N)
        while active.size:
            cur = node[active]
            go_right = X[active, self.feature[cur]] > self.threshold[cur]
            node[active] = np.where(go_right, self.topology.right[cur], self.topology.left[cur])
            active = active[node[active] >= 0]
        leaves = -1 - node
        return int(leaves[0]) if single else leaves

    def predict(self, X):
        leaves = self.route(X)
        return self.values[leaves]

    def __eq__(self, other):
        if not isinstance(other, AxisTree):
            return NotImplemented
        return (
            self.topology == other.topology
            and self.task == other.task
            and np.array_equal(self.feature, other.feature)
            and np.array_equal(self.threshold, other.threshold)
            and np.array_equal(self.values, other.values)
            and self.n_classes == other.n_classes
            and self.preprocessing == other.preprocessing
        )

    __hash__ = None

    def to_dict(self) -> dict:
        out = {
            "format_version": FORMAT_VERSION,
            "model": "axis",
            "task": self.task,
        }
        if self.task == "classify":
            out["c"] = self.n_classes
        if self.max_depth is not None:
            out["max_depth"] = self.max_depth
        out["topology"] = {"children": self.topology.children_pairs()}
        out["feature"] = self.feature.tolist()
        out["threshold"] = self.threshold.tolist()
        out["leaves"] = self.values.tolist()
        for key in PREPROCESSING_KEYS:
            if key in self.preprocessing:
                out[key] = self.preprocessing[key]
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "AxisTree":
        check_header(doc, "axis")
        try:
            pairs = doc["topology"]["children"]
            topo = TreeTopology([p[0] for p in pairs], [p[1] for p in pairs])
            pre = {k: doc[k] for k in PREPROCESSING_KEYS if k in doc}
            return cls(
                topo, doc["feature"], doc["threshold"], doc["leaves"], doc["task"],
                n_classes=doc.get("c"), max_depth=doc.get("max_depth"), preprocessing=pre,
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise TreeFormatError(f"malformed tree document: {exc!r}") from exc


def _impurity(y, task, n_classes):
    """Total SSE, or size-weighted Gini, of a node."""
    if task == "regress":
        return float(np.sum((y - y.mean()) ** 2))
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    return float(y.shape[0] - counts @ counts / y.shape[0])


def _leaf_value(y, task, n_classes):
    if task == "regress":
        return float(y.mean())
    return int(np.argmax(np.bincount(y, minlength=n_classes)))


def best_split(X, y, task, n_classes=None, min_leaf=5):
    """Best ``(score, feature, threshold)`` over every feature; ``feature`` is -1 if none is valid.

    Equal scores keep the lower feature index.
    """
    best = (np.inf, -1, 0.0)
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = np.ascontiguousarray(X[order, f])
        if task == "regress":
            score, thr = kernels.best_sse_split(xs, np.ascontiguousarray(y[order], dtype=np.float64), min_leaf)
        else:
            score, thr = kernels.best_gini_split(
                xs, np.ascontiguousarray(y[order], dtype=np.int64), n_classes, min_leaf
            )
        if score < best[0]:
            best = (float(score), f, float(thr))
    return best


def fit_cart(data, max_depth: int, min_leaf: int = 5, split: str = "train") -> AxisTree:
    """Grow a tree greedily until ``max_depth``, a pure node, or no admissible split."""
    X, y = data.split(split)
    if X.shape[0] == 0:
        raise ValueError("cannot fit CART on an empty sample")
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    task = data.task
    n_classes = data.n_classes if task == "classify" else None

    left, right, feature, threshold, values = [], [], [], [], []
    # queue entries: (sample indices, depth, parent node, is_right_child)
    queue = deque([(np.arange(X.shape[0]), 0, -1, False)])
    while queue:
        idx, depth, parent, is_right = queue.popleft()
        ys = y[idx]
        f, thr = -1, 0.0
        parent_score = _impurity(ys, task, n_classes)
        if depth < max_depth and parent_score > 0.0:
            score, f, thr = best_split(X[idx], ys, task, n_classes, min_leaf)
            if not score < parent_score:
                f = -1
        if f < 0:
            ref = -1 - len(values)
            values.append(_leaf_value(ys, task, n_classes))
        else:
            ref = len(feature)
            feature.append(f)
            threshold.append(thr)
            left.append(0)
            right.append(0)
            go_right = X[idx, f] > thr
            queue.append((idx[~go_right], depth + 1, ref, False))
            queue.append((idx[go_right], depth + 1, ref, True))
        if parent >= 0:
            (right if is_right else left)[parent] = ref

    return AxisTree(
        TreeTopology(left, right), feature, threshold, values, task,
        n_classes=n_classes, max_depth=max_depth, preprocessing=data.preprocessing(),
    )


def predict_cart(tree: AxisTree, x):
    return tree.predict(x)
