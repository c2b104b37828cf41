"""Reverse-mode gradients for the classification and regression heads.

Losses are batch means: squared error for regression, softmax cross-entropy
over the class logits for classification. Subgradients at measure-zero kinks
are fixed: a ReLU at exactly 0 passes nothing, and a max-pool tie sends the
gradient to the lowest leaf index.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import selectors
from .selectors import SelectorMode, SelectorOutput
from .semnet import ForwardTrace, SemNet, class_logits, forward_logits


@dataclass
class RegressorBank:
    """Leaf regressors; row ``l`` is ``(theta_l, alpha_l)``."""

    Theta: np.ndarray

    @classmethod
    def zeros(cls, n, d):
        return cls(np.zeros((n, d + 1)))

    @classmethod
    def from_tree(cls, tree):
        return cls(np.column_stack([tree.theta, tree.alpha]))

    @property
    def theta(self):
        return self.Theta[:, :-1]

    @property
    def alpha(self):
        return self.Theta[:, -1]

    def outputs(self, X):
        """``r[i, l] = theta_l . x_i + alpha_l``."""
        return X @ self.Theta[:, :-1].T + self.Theta[:, -1]


@dataclass
class Gradients:
    gA: np.ndarray
    gb: np.ndarray
    gTheta: Optional[np.ndarray] = None
    dz: Optional[np.ndarray] = None
    loss: float = 0.0


@dataclass
class RegTrace:
    net: SemNet
    fwd: ForwardTrace
    sel: SelectorOutput
    r: np.ndarray
    yhat: np.ndarray
    mode: SelectorMode


@dataclass
class ClsTrace:
    net: SemNet
    fwd: ForwardTrace
    logits: np.ndarray


def augmented(X):
    return np.column_stack([X, np.ones(X.shape[0])])


def backprop_logits(net: SemNet, fwd: ForwardTrace, dz):
    """Push ``dL/dz`` through the fixed masks and paired ReLUs onto ``A`` and ``b``."""
    u = fwd.u
    du = (dz @ net.masks.top) * (u > 0) - (dz @ net.masks.bot) * (u < 0)
    return du.T @ fwd.x, du.sum(axis=0)


def reg_forward(net: SemNet, bank: RegressorBank, x, mode: SelectorMode):
    single = np.ndim(x) == 1
    z, fwd = forward_logits(net, x)
    sel = selectors.select(fwd.z, mode)
    r = bank.outputs(fwd.x)
    yhat = np.einsum("ij,ij->i", sel.s, r)
    trace = RegTrace(net, fwd, sel, r, yhat, mode)
    return (float(yhat[0]) if single else yhat), trace


def reg_backward(trace: RegTrace, y, mode: Optional[SelectorMode] = None) -> Gradients:
    if mode is not None and mode != trace.mode:
        raise ValueError(f"trace was built with {trace.mode}, not {mode}")
    mode = trace.mode
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    N = trace.yhat.shape[0]
    if y.shape != (N,):
        raise ValueError(f"expected {N} targets, got shape {y.shape}")
    resid = trace.yhat - y
    dy = 2.0 * resid / N

    s = trace.sel.s
    if mode.kind == "topk_reg1":
        s = selectors.hardmax(trace.fwd.z).s
    gTheta = (dy[:, None] * s).T @ augmented(trace.fwd.x)

    dz = selectors.backward(trace.sel, dy[:, None] * trace.r)
    net = trace.net
    if trace.sel.backward == selectors.ZERO:
        gA, gb = np.zeros_like(net.A), np.zeros_like(net.b)
    else:
        gA, gb = backprop_logits(net, trace.fwd, dz)
    return Gradients(gA, gb, gTheta, dz, float(np.mean(resid * resid)))


def reg_loss(net, bank, X, y, mode) -> float:
    yhat, _ = reg_forward(net, bank, np.atleast_2d(X), mode)
    return float(np.mean((yhat - y) ** 2))


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cls_forward(net: SemNet, x):
    logits, fwd = class_logits(net, x)
    logits2 = np.atleast_2d(logits)
    return logits, ClsTrace(net, fwd, logits2)


def cls_backward(trace: ClsTrace, labels) -> Gradients:
    labels = np.atleast_1d(np.asarray(labels))
    N, c = trace.logits.shape
    if labels.shape != (N,):
        raise ValueError(f"expected {N} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in [0, {c})")
    logp = _log_softmax(trace.logits)
    rows = np.arange(N)
    loss = float(-logp[rows, labels].mean())
    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0
    dlogits /= N
    dz = np.zeros_like(trace.fwd.z)
    for cls in range(c):
        # leaves belong to exactly one class, so the targets never collide
        dz[rows, trace.fwd.class_argmax[:, cls]] = dlogits[:, cls]
    gA, gb = backprop_logits(trace.net, trace.fwd, dz)
    return Gradients(gA, gb, None, dz, loss)


def cls_loss(net, X, labels) -> float:
    logits, _ = class_logits(net, np.atleast_2d(X))
    logp = _log_softmax(np.atleast_2d(logits))
    return float(-logp[np.arange(len(labels)), labels].mean())
