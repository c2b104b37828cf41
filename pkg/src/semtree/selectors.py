"""Leaf selectors over leaf logits: hardmax, straight-through and top-k softmax.

Each selector returns the selection weights ``s`` together with how the
backward pass treats them. All functions accept a single logit vector or a
batch with one row per sample.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels

ZERO = "zero"
IDENTITY = "identity"
MASKED_SOFTMAX = "masked_softmax"


@dataclass(frozen=True)
class SelectorMode:
    """``kind`` is one of ``hardmax``, ``ste``, ``topk`` or ``topk_reg1``.

    ``topk_reg1`` selects like ``topk`` but only the top leaf's regressor
    receives a gradient.
    """

    kind: str
    k: int = 1
    tau: float = 1.0

    def __post_init__(self):
        if self.kind not in ("hardmax", "ste", "topk", "topk_reg1"):
            raise ValueError(f"unknown selector {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")

    @classmethod
    def hardmax(cls):
        return cls("hardmax")

    @classmethod
    def ste(cls):
        return cls("ste")

    @classmethod
    def topk(cls, k, tau=0.5):
        return cls("topk", int(k), float(tau))

    @classmethod
    def topk_reg1(cls, k, tau=0.5):
        return cls("topk_reg1", int(k), float(tau))


@dataclass
class SelectorOutput:
    s: np.ndarray
    support: np.ndarray
    backward: str
    tau: float = 1.0

    @property
    def single(self):
        return self.s.ndim == 1


def _batch(z):
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] == 0:
        raise ValueError("empty logit vector")
    return np.ascontiguousarray(np.atleast_2d(z)), z.ndim == 1


def _one_hot(z):
    Z, single = _batch(z)
    s = np.zeros_like(Z)
    s[np.arange(Z.shape[0]), np.argmax(Z, axis=1)] = 1.0
    return (s[0] if single else s), (s[0] > 0 if single else s > 0)


def hardmax(z) -> SelectorOutput:
    s, support = _one_hot(z)
    return SelectorOutput(s, support, ZERO)


def ste(z) -> SelectorOutput:
    s, support = _one_hot(z)
    return SelectorOutput(s, support, IDENTITY)


def topk(z, k: int, tau: float) -> SelectorOutput:
    Z, single = _batch(z)
    if not 1 <= k <= Z.shape[1]:
        raise ValueError(f"k={k} out of range for {Z.shape[1]} logits")
    if not tau > 0:
        raise ValueError("tau must be > 0")
    S, support = kernels.topk_forward(Z, int(k), float(tau))
    if single:
        S, support = S[0], support[0]
    return SelectorOutput(S, support, MASKED_SOFTMAX, float(tau))


def topk_backward(output: SelectorOutput, upstream, tau: float = None) -> np.ndarray:
    """Gradient w.r.t. the logits given ``upstream = dL/ds``; the top-k mask is held fixed."""
    tau = output.tau if tau is None else tau
    G = np.asarray(upstream, dtype=np.float64)
    if G.shape != output.s.shape:
        raise ValueError(f"upstream shape {G.shape} does not match selection {output.s.shape}")
    S2 = np.ascontiguousarray(np.atleast_2d(output.s))
    G2 = np.ascontiguousarray(np.atleast_2d(G))
    out = kernels.topk_backward(S2, G2, float(tau))
    return out[0] if output.single else out


def backward(output: SelectorOutput, upstream) -> np.ndarray:
    """Dispatch on the selector's backward rule."""
    G = np.asarray(upstream, dtype=np.float64)
    if output.backward == ZERO:
        return np.zeros_like(output.s)
    if output.backward == IDENTITY:
        return G.copy()
    return topk_backward(output, G)


def select(z, mode: SelectorMode) -> SelectorOutput:
    if mode.kind == "hardmax":
        return hardmax(z)
    if mode.kind == "ste":
        return ste(z)
    return topk(z, mode.k, mode.tau)
