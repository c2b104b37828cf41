"""Datasets: CSV ingestion, standardization, seeded splits and synthetic generators."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tree import ObliqueTree, TreeTopology, atomic_write_text


class DataError(ValueError):
    pass


def standardize(X, means, stds):
    return (X - means) / stds


def unstandardize(Z, means, stds):
    return Z * stds + means


def column_stats(X):
    """Per-column mean and std; constant columns get std 1 so they map to zero."""
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.where(stds > 0, stds, 1.0)
    return means, stds


def split_indices(N, test_fraction, seed):
    if not 0.0 <= test_fraction < 1.0:
        raise DataError("test_fraction must be in [0, 1)")
    perm = np.random.default_rng(seed).permutation(N)
    n_test = int(round(N * test_fraction))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


@dataclass
class Dataset:
    """Standardized data plus everything needed to undo the standardization.

    ``X`` holds every row standardized with the training-split statistics.
    For regression ``y`` is the standardized target; for classification it is
    a label index into ``classes``.
    """

    X: np.ndarray
    y: np.ndarray
    task: str
    feature_means: np.ndarray
    feature_stds: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    seed: int = 0
    target_mean: float = 0.0
    target_std: float = 1.0
    classes: Optional[np.ndarray] = None
    feature_names: list = field(default_factory=list)
    label_name: str = "y"
    X_raw: Optional[np.ndarray] = field(default=None, repr=False)
    y_raw: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def from_arrays(cls, X_raw, y_raw, task, test_fraction=0.2, seed=0, feature_names=None, label_name="y"):
        X_raw = np.asarray(X_raw, dtype=np.float64)
        if X_raw.ndim != 2 or X_raw.shape[0] == 0:
            raise DataError("need a non-empty 2-D feature matrix")
        if not np.all(np.isfinite(X_raw)):
            raise DataError("features contain NaN or infinite values")
        N, d = X_raw.shape
        y_raw = np.asarray(y_raw).reshape(-1)
        if y_raw.shape[0] != N:
            raise DataError("features and targets differ in length")
        train_idx, test_idx = split_indices(N, test_fraction, seed)
        means, stds = column_stats(X_raw[train_idx])
        X = standardize(X_raw, means, stds)
        kwargs = {}
        if task == "regress":
            y_raw = y_raw.astype(np.float64)
            if not np.all(np.isfinite(y_raw)):
                raise DataError("targets contain NaN or infinite values")
            t_mean = float(y_raw[train_idx].mean())
            t_std = float(y_raw[train_idx].std()) or 1.0
            y = (y_raw - t_mean) / t_std
            kwargs = dict(target_mean=t_mean, target_std=t_std)
        elif task == "classify":
            classes, y = np.unique(y_raw, return_inverse=True)
            kwargs = dict(classes=classes)
            y = y.astype(np.int64)
        else:
            raise DataError(f"unknown task {task!r}")
        names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(d)]
        return cls(X, y, task, means, stds, train_idx, test_idx, seed,
                   feature_names=names, label_name=label_name, X_raw=X_raw, y_raw=y_raw, **kwargs)

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def n_classes(self):
        return None if self.classes is None else len(self.classes)

    @property
    def X_train(self):
        return self.X[self.train_idx]

    @property
    def y_train(self):
        return self.y[self.train_idx]

    @property
    def X_test(self):
        return self.X[self.test_idx]

    @property
    def y_test(self):
        return self.y[self.test_idx]

    def split(self, which):
        if which == "train":
            return self.X_train, self.y_train
        if which == "test":
            return self.X_test, self.y_test
        if which == "all":
            return self.X, self.y
        raise DataError(f"unknown split {which!r}")

    def raw_X(self):
        if self.X_raw is not None:
            return self.X_raw
        return unstandardize(self.X, self.feature_means, self.feature_stds)

    def raw_y(self, y=None):
        """Targets in original units; ``y`` converts predictions instead of the stored targets."""
        if y is None:
            if self.y_raw is not None:
                return self.y_raw
            y = self.y
        if self.task != "regress":
            return self.classes[y]
        return y * self.target_std + self.target_mean

    def preprocessing(self) -> dict:
        out = {
            "feature_means": self.feature_means.tolist(),
            "feature_stds": self.feature_stds.tolist(),
        }
        if self.task == "regress":
            out["target_mean"] = self.target_mean
            out["target_std"] = self.target_std
        else:
            out["classes"] = self.classes.tolist()
        return out


def read_csv(path, label_column):
    """Raw ``(X, y, feature_names)`` from a numeric CSV with a header row."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError(f"{path} has a header but no data rows")
    if label_column not in header:
        raise DataError(f"label column {label_column!r} not in header {header}")
    li = header.index(label_column)
    values = np.empty((len(body), len(header)))
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{r}: expected {len(header)} cells, found {len(row)}")
        for c, cell in enumerate(row):
            try:
                values[r - 2, c] = float(cell)
            except ValueError:
                raise DataError(f"{path}:{r}: non-numeric cell {cell!r} in column {header[c]!r}") from None
    if np.isnan(values).any():
        raise DataError(f"{path} contains NaN cells")
    feat_cols = [c for c in range(len(header)) if c != li]
    if not feat_cols:
        raise DataError(f"{path} has no feature columns")
    return values[:, feat_cols], values[:, li], [header[c] for c in feat_cols]


def labels_as_int(y):
    if np.any(y != np.round(y)):
        raise DataError("classification labels must be integers")
    return y.astype(np.int64)


def load_csv(path, label_column, task, test_fraction=0.2, seed=0) -> Dataset:
    X, y, names = read_csv(path, label_column)
    if task == "classify":
        y = labels_as_int(y)
    return Dataset.from_arrays(X, y, task, test_fraction, seed, feature_names=names, label_name=label_column)


def write_csv(path, X, y, feature_names=None, label_name="y") -> None:
    names = feature_names or [f"x{i}" for i in range(X.shape[1])]
    lines = [",".join(list(names) + [label_name])]
    for row, target in zip(X, y):
        lines.append(",".join(repr(float(v)) for v in row) + "," + (
            str(int(target)) if np.issubdtype(np.asarray(y).dtype, np.integer) else repr(float(target))
        ))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_manifest(path) -> list:
    """A JSON list of ``{name, path, label, task}`` dataset descriptions."""
    with open(path, encoding="utf-8") as fh:
        entries = json.load(fh)
    for e in entries:
        missing = {"name", "path", "label", "task"} - set(e)
        if missing:
            raise DataError(f"manifest entry {e.get('name', '?')} lacks {sorted(missing)}")
    return entries


def _unit_rows(rng, m, d):
    A = rng.standard_normal((m, d))
    return A / np.linalg.norm(A, axis=1, keepdims=True)


def data_aware_tree(rng, height, X, quantile_range=(0.15, 0.85), root_normal=None):
    """Complete tree whose every split cuts the points that reach it.

    Each hyperplane has a random unit normal (or ``root_normal`` at the root)
    and passes through a random quantile of the projected points at its node,
    so every leaf receives data and masses differ from leaf to leaf.
    """
    topo = TreeTopology.complete(height)
    d = X.shape[1]
    A = _unit_rows(rng, topo.m, d)
    if root_normal is not None and topo.m:
        A[0] = root_normal
    b = np.zeros(topo.m)
    members = {0: np.arange(X.shape[0])}
    for i in range(topo.m):
        idx = members.pop(i, np.arange(0))
        proj = X[idx] @ A[i]
        if proj.size >= 2:
            q = rng.uniform(*quantile_range)
            b[i] = -np.quantile(proj, q)
        else:
            b[i] = rng.uniform(-0.5, 0.5)
        go_right = (X[idx] @ A[i] + b[i]) > 0
        for child, sel in ((topo.left[i], ~go_right), (topo.right[i], go_right)):
            if child >= 0:
                members[int(child)] = idx[sel]
    return topo, A, b


def gen_teacher(seed, height=5, d=2, n_samples=30000, test_fraction=0.2):
    """Random oblique regression tree and noise-free samples from it on ``[-1, 1]^d``."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n_samples, d))
    topo, A, b = data_aware_tree(rng, height, X)
    theta = rng.standard_normal((topo.n, d))
    alpha = rng.standard_normal(topo.n)
    teacher = ObliqueTree(topo, A, b, theta=theta, alpha=alpha)
    y = teacher.predict_reg(X)
    return teacher, Dataset.from_arrays(X, y, "regress", test_fraction, seed)


def gen_imbalance(seed, height=5, d=2, n_samples=8000, test_fraction=0.2, with_teacher=False):
    """Piecewise-linear target from a tree with ``2**height`` populated leaves of unequal mass."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n_samples, d))
    topo, A, b = data_aware_tree(rng, height, X, quantile_range=(0.1, 0.9))
    theta = 2.0 * rng.standard_normal((topo.n, d))
    alpha = rng.standard_normal(topo.n)
    teacher = ObliqueTree(topo, A, b, theta=theta, alpha=alpha)
    data = Dataset.from_arrays(X, teacher.predict_reg(X), "regress", test_fraction, seed)
    return (teacher, data) if with_teacher else data


def gen_blobs(seed, n_samples=400, d=2, separation=4.0, spread=0.6, margin=1.0, test_fraction=0.2):
    """Two Gaussian classes on either side of a random hyperplane, at least ``margin`` apart."""
    rng = np.random.default_rng(seed)
    w = _unit_rows(rng, 1, d)[0]
    labels = np.arange(n_samples) % 2
    X = np.empty((n_samples, d))
    for i, lab in enumerate(labels):
        sign = 1.0 if lab else -1.0
        while True:
            x = sign * 0.5 * separation * w + spread * rng.standard_normal(d)
            if sign * (x @ w) >= 0.5 * margin:
                break
        X[i] = x
    return Dataset.from_arrays(X, labels, "classify", test_fraction, seed)


def gen_xor(seed, n_samples=800, spread=0.35, test_fraction=0.2):
    """Four equally sized Gaussian blobs at ``(+-1, +-1)``; opposite corners share a class."""
    rng = np.random.default_rng(seed)
    corner = rng.permutation(np.arange(n_samples) % 4)
    centers = np.array([[-1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [1.0, -1.0]])
    X = centers[corner] + spread * rng.standard_normal((n_samples, 2))
    labels = (corner >= 2).astype(np.int64)
    return Dataset.from_arrays(X, labels, "classify", test_fraction, seed)


