"""Network encoding of a hard oblique tree.

The network computes ``u = A x + b``, splits it into the two branch
activations ``relu(u)`` / ``relu(-u)`` and sums them into one logit per leaf
through fixed 0/1 masks. The leaf reached by the tree is always the strict
argmax of those logits, so training the network trains the tree.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .tree import ObliqueTree, TreeTopology


@dataclass(frozen=True)
class PathMasks:
    """``top[j, i]`` / ``bot[j, i]`` gate the right/left activation of node ``i`` into leaf ``j``."""

    top: np.ndarray
    bot: np.ndarray


def build_masks(topology: TreeTopology) -> PathMasks:
    n, m = topology.n, topology.m
    top = np.ones((n, m))
    bot = np.ones((n, m))
    for j, path in enumerate(topology.paths):
        for i, went_right in path:
            if went_right:
                bot[j, i] = 0.0
            else:
                top[j, i] = 0.0
    top.setflags(write=False)
    bot.setflags(write=False)
    return PathMasks(top, bot)


def assign_classes(n_leaves: int, n_classes: int, policy: str = "round_robin") -> np.ndarray:
    """Fixed leaf -> class map.

    ``round_robin`` gives leaf ``l`` class ``l % c``; ``contiguous`` gives
    blocks of neighbouring leaves the same class.
    """
    leaves = np.arange(n_leaves)
    if policy == "round_robin":
        return leaves % n_classes
    if policy == "contiguous":
        return leaves * n_classes // n_leaves
    raise ValueError(f"unknown class assignment policy {policy!r}")


@dataclass
class ForwardTrace:
    x: np.ndarray
    u: np.ndarray
    top: np.ndarray
    bot: np.ndarray
    z: np.ndarray
    class_argmax: Optional[np.ndarray] = None


class SemNet:
    """Trainable encoding of a tree: ``A`` and ``b`` change, masks never do.

    For classification ``leaf_classes[l]`` is the fixed class of leaf ``l``.
    """

    def __init__(self, topology: TreeTopology, A, b, leaf_classes=None, n_classes=None):
        self.topology = topology
        self.A = np.array(A, dtype=np.float64)
        self.b = np.array(b, dtype=np.float64).reshape(-1)
        if self.A.ndim != 2 or self.A.shape[0] != topology.m or self.b.shape != (topology.m,):
            raise ValueError(
                f"A must be ({topology.m}, d) and b ({topology.m},); got {self.A.shape}, {self.b.shape}"
            )
        self.masks = build_masks(topology)
        self.leaf_classes = None
        self.n_classes = None
        if leaf_classes is not None:
            lc = np.asarray(leaf_classes, dtype=np.int64)
            if lc.shape != (topology.n,):
                raise ValueError(f"need one class per leaf ({topology.n}), got {lc.shape}")
            self.leaf_classes = lc
            self.n_classes = int(n_classes) if n_classes is not None else int(lc.max()) + 1
            if lc.min() < 0 or lc.max() >= self.n_classes:
                raise ValueError("leaf class out of range")
            self._class_leaves = [np.flatnonzero(lc == c) for c in range(self.n_classes)]

    @classmethod
    def init_random(cls, topology, d, rng, n_classes=None, assignment="round_robin"):
        """Rows of ``A`` uniform in ``[-1/sqrt(d), 1/sqrt(d)]``, ``b = 0``."""
        lim = 1.0 / np.sqrt(d)
        A = rng.uniform(-lim, lim, size=(topology.m, d))
        b = np.zeros(topology.m)
        leaf_classes = None
        if n_classes is not None:
            leaf_classes = assign_classes(topology.n, n_classes, assignment)
        return cls(topology, A, b, leaf_classes, n_classes)

    @property
    def d(self):
        return self.A.shape[1]

    @property
    def n(self):
        return self.topology.n

    @property
    def m(self):
        return self.topology.m

    def class_matrix(self) -> np.ndarray:
        """``C[i, l] = 1`` iff leaf ``l`` is assigned class ``i``."""
        C = np.zeros((self.n_classes, self.n))
        C[self.leaf_classes, np.arange(self.n)] = 1.0
        return C

    def copy(self) -> "SemNet":
        return SemNet(self.topology, self.A, self.b, self.leaf_classes, self.n_classes)


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    if X.ndim != 2 or X.shape[1] != net.d:
        raise ValueError(f"expected inputs of dimension {net.d}, got shape {x.shape}")
    return X, single


def forward_logits(net: SemNet, x):
    """Leaf logits for one input (``(n,)``) or a batch (``(N, n)``), plus the cache."""
    X, single = _as_batch(net, x)
    u = X @ net.A.T + net.b
    top = np.maximum(u, 0.0)
    bot = np.maximum(-u, 0.0)
    z = top @ net.masks.top.T + bot @ net.masks.bot.T
    trace = ForwardTrace(X, u, top, bot, z)
    return (z[0] if single else z), trace


def class_logits(net: SemNet, x, trace: Optional[ForwardTrace] = None):
    """Per-class max over the logits of that class's leaves.

    The winning leaf of each class (lowest index on ties) is recorded on the
    trace for the backward pass.
    """
    if net.leaf_classes is None:
        raise TypeError("class_logits needs a classification net")
    single = np.ndim(x) == 1
    if trace is None:
        _, trace = forward_logits(net, x)
    z = trace.z
    out = np.empty((z.shape[0], net.n_classes))
    arg = np.empty((z.shape[0], net.n_classes), dtype=np.int64)
    for c, leaves in enumerate(net._class_leaves):
        if leaves.size == 0:
            raise ValueError(f"class {c} has no assigned leaf")
        sub = z[:, leaves]
        k = np.argmax(sub, axis=1)
        arg[:, c] = leaves[k]
        out[:, c] = sub[np.arange(z.shape[0]), k]
    trace.class_argmax = arg
    return (out[0] if single else out), trace


def from_tree(tree: ObliqueTree) -> SemNet:
    if tree.labels is not None:
        return SemNet(tree.topology, tree.A, tree.b, tree.labels, tree.n_classes)
    return SemNet(tree.topology, tree.A, tree.b)


def to_tree(net: SemNet, payloads=None, preprocessing=None) -> ObliqueTree:
    """Extract the hard tree.

    ``payloads`` is ignored for classification nets (their leaf classes are
    used) and is a regressor bank or ``(theta, alpha)`` pair for regression.
    """
    pre = dict(preprocessing or {})
    if net.leaf_classes is not None and payloads is None:
        return ObliqueTree(
            net.topology, net.A, net.b, labels=net.leaf_classes, n_classes=net.n_classes,
            preprocessing=pre,
        )
    if payloads is None:
        raise ValueError("a regression net needs leaf regressors to become a tree")
    if hasattr(payloads, "Theta"):
        theta, alpha = payloads.Theta[:, :-1], payloads.Theta[:, -1]
    else:
        theta, alpha = payloads
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (net.n, net.d):
        raise ValueError(f"regressors must have shape {(net.n, net.d)}, got {theta.shape}")
    return ObliqueTree(net.topology, net.A, net.b, theta=theta, alpha=alpha, preprocessing=pre)


def check_theorem1(net: SemNet, tree: ObliqueTree, xs) -> bool:
    """True iff the logit argmax picks the tree's leaf for every row of ``xs``."""
    z, _ = forward_logits(net, np.atleast_2d(xs))
    return bool(np.array_equal(np.argmax(z, axis=1), tree.route(np.atleast_2d(xs))))
