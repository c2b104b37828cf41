"""Hard oblique decision trees: topology, routing, prediction and file I/O.

A tree with ``m`` internal nodes and ``n = m + 1`` leaves sends ``x`` right at
internal node ``j`` iff ``A[j] @ x + b[j] > 0``; an exact zero goes left.
Internal node 0 is the root. Children are stored as integers: ``c >= 0`` is an
internal node, ``c < 0`` is leaf ``-1 - c``.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from ._backend import kernels

FORMAT_VERSION = 1

# standardization statistics (and raw class values) a tree file may carry
PREPROCESSING_KEYS = ("feature_means", "feature_stds", "target_mean", "target_std", "classes")


class TreeFormatError(ValueError):
    """Raised for malformed trees and unreadable or invalid tree files."""


def leaf_ref(leaf: int) -> int:
    return -1 - leaf


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


class TreeTopology:
    """Shape of a full binary tree.

    ``paths[j]`` lists ``(internal_node, went_right)`` from the root down to
    leaf ``j``.
    """

    def __init__(self, left, right):
        left = _frozen(left, np.int64).reshape(-1)
        right = _frozen(right, np.int64).reshape(-1)
        if left.shape != right.shape:
            raise TreeFormatError("left/right child arrays differ in length")
        self.left = left
        self.right = right
        self.m = int(left.shape[0])
        self.n = self.m + 1
        self.paths = self._check_and_collect_paths()

    def _check_and_collect_paths(self):
        m, n = self.m, self.n
        if m == 0:
            return ((),)
        parents = np.zeros(m, dtype=int)
        leaf_seen = np.zeros(n, dtype=int)
        for c in np.concatenate([self.left, self.right]):
            if c >= 0:
                if c >= m:
                    raise TreeFormatError(f"child index {c} out of range for {m} internal nodes")
                parents[c] += 1
            else:
                j = -1 - c
                if j >= n:
                    raise TreeFormatError(f"leaf index {j} out of range for {n} leaves")
                leaf_seen[j] += 1
        if parents[0] != 0:
            raise TreeFormatError("root (internal node 0) has a parent")
        if m > 1 and np.any(parents[1:] != 1):
            raise TreeFormatError("every non-root internal node needs exactly one parent")
        if np.any(leaf_seen != 1):
            raise TreeFormatError("every leaf needs exactly one parent")

        paths: list = [None] * n
        stack = [(0, ())]
        visited = 0
        while stack:
            node, path = stack.pop()
            visited += 1
            for went_right, child in ((False, self.left[node]), (True, self.right[node])):
                p = path + ((node, went_right),)
                if child >= 0:
                    stack.append((int(child), p))
                else:
                    paths[-1 - child] = p
        if visited != m:
            raise TreeFormatError("internal nodes are not all reachable from the root")
        return tuple(paths)

    @classmethod
    def complete(cls, height: int) -> "TreeTopology":
        """Complete tree in breadth-first order; leaves numbered left to right."""
        if height < 0:
            raise ValueError("height must be >= 0")
        m = 2**height - 1
        left = np.empty(m, dtype=np.int64)
        right = np.empty(m, dtype=np.int64)
        for i in range(m):
            lc, rc = 2 * i + 1, 2 * i + 2
            left[i] = lc if lc < m else leaf_ref(lc - m)
            right[i] = rc if rc < m else leaf_ref(rc - m)
        return cls(left, right)

    @property
    def depth(self) -> int:
        return max(len(p) for p in self.paths)

    def children_pairs(self) -> list:
        return [[int(l), int(r)] for l, r in zip(self.left, self.right)]

    def __eq__(self, other):
        return (
            isinstance(other, TreeTopology)
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
        )

    def __repr__(self):
        return f"TreeTopology(m={self.m}, n={self.n})"


@dataclass(frozen=True, eq=False)
class ObliqueTree:
    """A standalone hard oblique tree.

    Leaves carry either integer class ``labels`` (length ``n``) or linear
    regressors ``theta`` (``n x d``) and ``alpha`` (``n``). The optional
    ``preprocessing`` dict keeps the feature/target standardization the tree
    was trained under so it can be applied to raw data later.
    """

    topology: TreeTopology
    A: np.ndarray
    b: np.ndarray
    labels: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    n_classes: Optional[int] = None
    preprocessing: dict = field(default_factory=dict)

    def __post_init__(self):
        m, n = self.topology.m, self.topology.n
        A = np.asarray(self.A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != m:
            raise TreeFormatError(f"A must have {m} rows, got shape {A.shape}")
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if b.shape[0] != m:
            raise TreeFormatError(f"b must have length {m}, got {b.shape[0]}")
        object.__setattr__(self, "A", _frozen(A, np.float64))
        object.__setattr__(self, "b", _frozen(b, np.float64))
        d = A.shape[1]
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise TreeFormatError("hyperplane parameters must be finite")

        if (self.labels is None) == (self.theta is None):
            raise TreeFormatError("a tree needs exactly one payload kind: labels or theta/alpha")
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,) or not np.issubdtype(labels.dtype, np.integer):
                raise TreeFormatError(f"labels must be {n} integers")
            c = int(self.n_classes) if self.n_classes is not None else int(labels.max()) + 1
            if labels.min() < 0 or labels.max() >= c:
                raise TreeFormatError(f"labels must lie in [0, {c})")
            object.__setattr__(self, "labels", _frozen(labels, np.int64))
            object.__setattr__(self, "n_classes", c)
        else:
            theta = np.asarray(self.theta, dtype=np.float64)
            alpha = np.asarray(self.alpha, dtype=np.float64).reshape(-1)
            if theta.shape != (n, d) or alpha.shape != (n,):
                raise TreeFormatError(f"regressors must be theta {(n, d)} and alpha {(n,)}")
            if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(alpha))):
                raise TreeFormatError("leaf regressors must be finite")
            object.__setattr__(self, "theta", _frozen(theta, np.float64))
            object.__setattr__(self, "alpha", _frozen(alpha, np.float64))
            object.__setattr__(self, "n_classes", None)

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.topology.m

    @property
    def n(self) -> int:
        return self.topology.n

    @property
    def task(self) -> str:
        return "classify" if self.labels is not None else "regress"

    def _as_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X2 = np.ascontiguousarray(X.reshape(1, -1) if single else X)
        if X2.ndim != 2 or X2.shape[1] != self.d:
            raise ValueError(f"expected inputs of dimension {self.d}, got shape {X.shape}")
        return X2, single

    def route(self, X):
        """Leaf index for one input (int) or each row of a batch (array)."""
        X2, single = self._as_batch(X)
        leaves = kernels.route_batch(self.topology.left, self.topology.right, self.A, self.b, X2)
        return int(leaves[0]) if single else leaves

    def predict_class(self, X):
        if self.labels is None:
            raise TypeError("predict_class needs a classification tree")
        out = self.labels[np.atleast_1d(self.route(X))]
        return int(out[0]) if np.ndim(X) == 1 else out

    def predict_reg(self, X):
        if self.theta is None:
            raise TypeError("predict_reg needs a regression tree")
        X2, single = self._as_batch(X)
        leaves = kernels.route_batch(self.topology.left, self.topology.right, self.A, self.b, X2)
        y = np.einsum("ij,ij->i", X2, self.theta[leaves]) + self.alpha[leaves]
        return float(y[0]) if single else y

    def predict(self, X):
        return self.predict_class(X) if self.labels is not None else self.predict_reg(X)

    def __eq__(self, other):
        if not isinstance(other, ObliqueTree):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return np.array_equal(a, b)

        return (
            self.topology == other.topology
            and np.array_equal(self.A, other.A)
            and np.array_equal(self.b, other.b)
            and same(self.labels, other.labels)
            and same(self.theta, other.theta)
            and same(self.alpha, other.alpha)
            and self.n_classes == other.n_classes
            and self.preprocessing == other.preprocessing
        )

    __hash__ = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "format_version": FORMAT_VERSION,
            "model": "oblique",
            "task": self.task,
            "d": self.d,
        }
        if self.labels is not None:
            out["c"] = self.n_classes
        out["topology"] = {"children": self.topology.children_pairs()}
        out["A"] = self.A.ravel().tolist()
        out["b"] = self.b.tolist()
        if self.labels is not None:
            out["leaves"] = [{"label": int(v)} for v in self.labels]
        else:
            out["leaves"] = [
                {"theta": t.tolist(), "alpha": float(a)} for t, a in zip(self.theta, self.alpha)
            ]
        for key in PREPROCESSING_KEYS:
            if key in self.preprocessing:
                out[key] = self.preprocessing[key]
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "ObliqueTree":
        check_header(doc, "oblique")
        try:
            d = int(doc["d"])
            pairs = doc["topology"]["children"]
            topo = TreeTopology([p[0] for p in pairs], [p[1] for p in pairs])
            flat = np.asarray(doc["A"], dtype=np.float64)
            if flat.size != topo.m * d:
                raise TreeFormatError(
                    f"A holds {flat.size} values but m={topo.m}, d={d} needs {topo.m * d}"
                )
            A = flat.reshape(topo.m, d)
            b = doc["b"]
            leaves = doc["leaves"]
            if len(leaves) != topo.n:
                raise TreeFormatError(f"expected {topo.n} leaves, found {len(leaves)}")
            pre = {
                k: doc[k]
                for k in PREPROCESSING_KEYS
                if k in doc
            }
            if doc["task"] == "classify":
                return cls(
                    topo, A, b,
                    labels=np.array([leaf["label"] for leaf in leaves], dtype=np.int64),
                    n_classes=int(doc["c"]),
                    preprocessing=pre,
                )
            if doc["task"] == "regress":
                theta = np.array([leaf["theta"] for leaf in leaves], dtype=np.float64).reshape(topo.n, d)
                alpha = np.array([leaf["alpha"] for leaf in leaves], dtype=np.float64)
                return cls(topo, A, b, theta=theta, alpha=alpha, preprocessing=pre)
            raise TreeFormatError(f"unknown task {doc['task']!r}")
        except (KeyError, TypeError, IndexError) as exc:
            raise TreeFormatError(f"malformed tree document: {exc!r}") from exc

    def to_dot(self, feature_names=None) -> str:
        names = feature_names or [f"x{i}" for i in range(self.d)]
        lines = ["digraph tree {", "  node [fontname=\"Helvetica\"];"]
        for i in range(self.m):
            terms = " + ".join(f"{w:.4g}*{nm}" for w, nm in zip(self.A[i], names))
            lines.append(f'  I{i} [shape=box, label="I{i}: {terms} + {self.b[i]:.4g} > 0"];')
        for j in range(self.n):
            if self.labels is not None:
                text = f"L{j}: class {self.labels[j]}"
            else:
                terms = " + ".join(f"{w:.4g}*{nm}" for w, nm in zip(self.theta[j], names))
                text = f"L{j}: {terms} + {self.alpha[j]:.4g}"
            lines.append(f'  L{j} [shape=ellipse, label="{text}"];')
        ref = lambda c: f"I{c}" if c >= 0 else f"L{-1 - c}"  # noqa: E731
        for i in range(self.m):
            lines.append(f'  I{i} -> {ref(self.topology.left[i])} [label="no"];')
            lines.append(f'  I{i} -> {ref(self.topology.right[i])} [label="yes"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def check_header(doc: dict, model: str) -> None:
    if not isinstance(doc, dict):
        raise TreeFormatError("tree document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise TreeFormatError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    if doc.get("model", "oblique") != model:
        raise TreeFormatError(f"expected a {model!r} tree, found {doc.get('model')!r}")


def _reject_constant(token):
    raise TreeFormatError(f"non-finite number {token!r} in tree file")


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file and rename, so errors leave no partial file."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(doc: dict) -> str:
    # float repr is the shortest string that round-trips exactly
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def save_tree(tree, path) -> None:
    atomic_write_text(path, dumps(tree.to_dict()))


def read_tree_document(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh, parse_constant=_reject_constant)
    except OSError as exc:
        raise TreeFormatError(f"cannot read tree file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise TreeFormatError(f"tree file {path} is not valid JSON: {exc}") from exc


def load_tree(path):
    """Load an oblique tree, or an axis-aligned one if the file says so."""
    doc = read_tree_document(path)
    if isinstance(doc, dict) and doc.get("model") == "axis":
        from .cart import AxisTree

        return AxisTree.from_dict(doc)
    return ObliqueTree.from_dict(doc)


def random_tree(rng, height: int, d: int, task: str = "regress", n_classes: int = 2) -> ObliqueTree:
    """Complete tree with Gaussian hyperplanes and payloads; handy for tests and demos."""
    topo = TreeTopology.complete(height)
    A = rng.standard_normal((topo.m, d))
    b = rng.standard_normal(topo.m)
    if task == "classify":
        return ObliqueTree(topo, A, b, labels=rng.integers(0, n_classes, topo.n), n_classes=n_classes)
    return ObliqueTree(topo, A, b, theta=rng.standard_normal((topo.n, d)), alpha=rng.standard_normal(topo.n))
