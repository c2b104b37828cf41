"""Accuracy, RMSE and leaf-utilization diagnostics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


def accuracy(model, X, y) -> float:
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("accuracy of an empty sample is undefined")
    pred = model.predict(X) if hasattr(model, "predict") else model(X)
    if np.issubdtype(np.asarray(pred).dtype, np.floating) and not np.issubdtype(y.dtype, np.floating):
        raise TypeError("accuracy needs a classifier, got real-valued predictions")
    return float(np.mean(np.asarray(pred) == y))


def rmse(model, X, y, scale: float = 1.0) -> float:
    """Root mean squared error; ``scale`` converts standardized units to raw ones."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("rmse of an empty sample is undefined")
    pred = model.predict(X) if hasattr(model, "predict") else model(X)
    pred = np.asarray(pred)
    if np.issubdtype(pred.dtype, np.integer):
        raise TypeError("rmse needs a regressor, got integer predictions")
    return float(np.sqrt(np.mean((pred - y) ** 2)) * scale)


@dataclass
class LeafHistogram:
    counts: np.ndarray
    epoch: object = None

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def sorted_desc(self) -> np.ndarray:
        return np.sort(self.counts)[::-1]


def route_leaves(model, X) -> np.ndarray:
    """Top-1 leaf of every row for trees and networks alike."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if hasattr(model, "route"):
        return np.atleast_1d(model.route(X))
    from .semnet import forward_logits

    z, _ = forward_logits(model, X)
    return np.argmax(z, axis=1)


def leaf_histogram(model, X, epoch=None) -> LeafHistogram:
    leaves = route_leaves(model, X)
    return LeafHistogram(np.bincount(leaves, minlength=model.n).astype(np.int64), epoch)


def utilization_summary(hist: LeafHistogram, threshold: Optional[float] = None) -> int:
    """Number of leaves holding strictly more than ``threshold`` samples (default ``N / (2n)``)."""
    if threshold is None:
        threshold = hist.total / (2 * len(hist.counts))
    return int(np.sum(hist.counts > threshold))


def regression_summary(tree, data) -> dict:
    out = {}
    for split in ("train", "test"):
        X, y = data.split(split)
        if len(y):
            out[f"{split}_rmse"] = rmse(tree, X, y)
            out[f"{split}_rmse_raw"] = rmse(tree, X, y, data.target_std)
    return out


def classification_summary(tree, data) -> dict:
    out = {}
    for split in ("train", "test"):
        X, y = data.split(split)
        if len(y):
            out[f"{split}_accuracy"] = accuracy(tree, X, y)
    return out
