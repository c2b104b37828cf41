"""SGD and Adam over dicts of numpy parameters, updated in place."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def sgd_step(params: dict, grads: dict, lr: float) -> None:
    for key, g in grads.items():
        if params[key].shape != g.shape:
            raise ValueError(f"{key}: gradient shape {g.shape} != parameter shape {params[key].shape}")
        params[key] -= lr * g


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> None:
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for key, g in grads.items():
        p = params[key]
        if p.shape != g.shape:
            raise ValueError(f"{key}: gradient shape {g.shape} != parameter shape {p.shape}")
        if key not in state.m:
            state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        m, v = state.m[key], state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


class Optimizer:
    """Small wrapper so training loops need not care which rule is in use."""

    def __init__(self, kind="adam", lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        if kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {kind!r}")
        if not lr > 0:
            raise ValueError("learning rate must be > 0")
        self.kind = kind
        self.lr = lr
        self.weight_decay = weight_decay
        self.state = AdamState(beta1, beta2, eps)

    def step(self, params: dict, grads: dict) -> None:
        if self.weight_decay:
            grads = {k: g + self.weight_decay * params[k] for k, g in grads.items()}
        if self.kind == "sgd":
            sgd_step(params, grads, self.lr)
        else:
            adam_step(params, grads, self.state, self.lr)
