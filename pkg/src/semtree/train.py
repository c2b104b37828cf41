"""Training loops: annealed top-k regression, the STE baseline and classification."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import metrics
from .grad import (
    RegressorBank,
    augmented,
    cls_backward,
    cls_forward,
    reg_backward,
    reg_forward,
)
from .optim import Optimizer
from .selectors import SelectorMode, topk
from .semnet import SemNet, forward_logits, to_tree


def parse_schedule(spec: str):
    """``"4:0,2:50,1:80"`` -> ``[(4, 0), (2, 50), (1, 80)]``; a bare ``k`` starts at epoch 0."""
    out = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            k, start = part.split(":", 1)
            out.append((int(k), int(start)))
        else:
            out.append((int(part), 0))
    if not out:
        raise ValueError("empty k schedule")
    return out


def format_schedule(schedule) -> str:
    return ",".join(f"{k}:{s}" for k, s in schedule)


@dataclass
class TrainPlan:
    """Optimizer settings, epoch budget and the k annealing schedule.

    With ``schedule=None`` k is 4 for the first half of the epochs, 2 until
    80%, then 1; fine-tuning switches from augmented to routed samples at
    ``finetune_at`` (default 90% of the epochs).
    """

    epochs: int = 100
    lr: float = 0.01
    batch_size: int = 128
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: Optional[list] = None
    tau: float = 0.5
    finetune_at: Optional[int] = None
    seed: int = 0
    weight_decay: float = 0.0
    leaf_fit: str = "gradient"
    ridge: float = 1e-8
    snapshot_epochs: tuple = ()

    def __post_init__(self):
        if self.schedule is None:
            T = self.epochs
            starts = {}
            for k, s in [(4, 0), (2, int(round(0.5 * T))), (1, int(round(0.8 * T)))]:
                starts[s] = k  # short runs: a later phase overrides one starting on the same epoch
            self.schedule = sorted(((k, s) for s, k in starts.items()), key=lambda p: p[1])
        self.schedule = [(int(k), int(s)) for k, s in self.schedule]
        if self.finetune_at is None:
            self.finetune_at = int(round(0.9 * self.epochs))
        self.validate()

    def validate(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.tau > 0:
            raise ValueError("temperature must be > 0")
        if self.leaf_fit not in ("gradient", "ridge"):
            raise ValueError(f"unknown leaf fit {self.leaf_fit!r}")
        ks = [k for k, _ in self.schedule]
        starts = [s for _, s in self.schedule]
        if starts[0] != 0:
            raise ValueError("k schedule must start at epoch 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("k schedule start epochs must increase")
        if any(k < 1 for k in ks) or any(b > a for a, b in zip(ks, ks[1:])):
            raise ValueError("k schedule must be non-increasing and >= 1")
        if ks[-1] != 1:
            raise ValueError("k schedule must end at k=1")
        if starts[-1] > self.epochs:
            raise ValueError("k=1 phase starts after the last epoch")
        if not starts[-1] <= self.finetune_at <= self.epochs:
            raise ValueError("fine-tune boundary must lie inside the k=1 phase")

    def k_at(self, epoch: int) -> int:
        k = self.schedule[0][0]
        for kk, start in self.schedule:
            if epoch >= start:
                k = kk
        return k

    def make_optimizer(self) -> Optimizer:
        return Optimizer(self.optimizer, self.lr, self.beta1, self.beta2, self.eps, self.weight_decay)

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs, "lr": self.lr, "batch_size": self.batch_size,
            "optimizer": self.optimizer, "schedule": format_schedule(self.schedule),
            "tau": self.tau, "finetune_at": self.finetune_at, "seed": self.seed,
            "weight_decay": self.weight_decay, "leaf_fit": self.leaf_fit,
        }


@dataclass
class TrainReport:
    method: str
    plan: dict
    epochs: list = field(default_factory=list)
    histograms: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    tree: object = None
    wall_clock: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "method": self.method,
            "plan": self.plan,
            "epochs": self.epochs,
            "histograms": self.histograms,
            "final": self.final,
        }
        if include_timing:
            out["wall_clock_seconds"] = self.wall_clock
        return out

    def epochs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "k", "loss"])
        for e in self.epochs:
            w.writerow([e["epoch"], e["k"], repr(e["loss"])])
        return buf.getvalue()


def _batches(rng, N, batch_size):
    perm = rng.permutation(N)
    for start in range(0, N, batch_size):
        yield perm[start:start + batch_size]


def _snapshot(report, tag, tree_or_net, X):
    hist = metrics.leaf_histogram(tree_or_net, X, epoch=tag)
    report.histograms.append({"epoch": tag, "counts": hist.counts.tolist()})


def _top1_leaves(net, X):
    z, _ = forward_logits(net, X)
    return np.argmax(z, axis=1)


def leaf_sample_pairs(net, X, augmented_sets: bool):
    """``(sample, leaf)`` pairs under the frozen router.

    With ``augmented_sets`` a leaf also gets every sample for which it is the
    second choice.
    """
    z, _ = forward_logits(net, X)
    if not augmented_sets or net.n < 2:
        return np.arange(X.shape[0]), np.argmax(z, axis=1)
    support = topk(z, 2, 1.0).support
    rows, leaves = np.nonzero(support)
    return rows, leaves


def _fit_leaves_ridge(bank, X, y, rows, leaves, ridge):
    Xa = augmented(X)
    for leaf in np.unique(leaves):
        sel = rows[leaves == leaf]
        M = Xa[sel]
        G = M.T @ M + ridge * np.eye(M.shape[1])
        bank.Theta[leaf] = np.linalg.solve(G, M.T @ y[sel])


def _fit_leaves_gradient_epoch(bank, X, y, rows, leaves, opt, rng, batch_size):
    params = {"Theta": bank.Theta}
    Xa = augmented(X)
    n = bank.Theta.shape[0]
    for batch in _batches(rng, rows.shape[0], batch_size):
        r_idx, l_idx = rows[batch], leaves[batch]
        xa = Xa[r_idx]
        pred = np.einsum("ij,ij->i", xa, bank.Theta[l_idx])
        dy = 2.0 * (pred - y[r_idx]) / batch.shape[0]
        onehot = np.zeros((batch.shape[0], n))
        onehot[np.arange(batch.shape[0]), l_idx] = dy
        opt.step(params, {"Theta": onehot.T @ xa})


def _regression_loss(net, bank, X, y, mode):
    yhat, _ = reg_forward(net, bank, X, mode)
    return float(np.mean((yhat - y) ** 2))


def train_regression(net: SemNet, bank: RegressorBank, data, plan: TrainPlan, reg1: bool = False,
                     trainable=("A", "b", "Theta")):
    """Annealed top-k training followed by two-stage leaf fine-tuning.

    While ``k >= 2`` the router and the regressors learn jointly through the
    top-k selector. Once ``k`` reaches 1 the router is frozen and only the leaf
    regressors are fitted: on augmented sample sets (first or second choice)
    before ``plan.finetune_at``, on the routed samples afterwards. With
    ``reg1`` only the top leaf's regressor gets a gradient in the joint phase.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(plan.seed)
    X, y = data.X_train, data.y_train
    N = X.shape[0]
    params = {"A": net.A, "b": net.b, "Theta": bank.Theta}
    opt = plan.make_optimizer()
    ft_opt = None
    report = TrainReport("topk_reg1" if reg1 else "topk", plan.to_dict())
    snaps = set(plan.snapshot_epochs)
    _snapshot(report, "init", net, X)
    pairs = {}

    for t in range(plan.epochs):
        k = min(plan.k_at(t), net.n)
        if k >= 2:
            mode = SelectorMode.topk_reg1(k, plan.tau) if reg1 else SelectorMode.topk(k, plan.tau)
            for batch in _batches(rng, N, plan.batch_size):
                _, trace = reg_forward(net, bank, X[batch], mode)
                g = reg_backward(trace, y[batch])
                grads = {"A": g.gA, "b": g.gb, "Theta": g.gTheta}
                opt.step(params, {key: grads[key] for key in trainable})
            eval_mode = mode
        else:
            stage = "augmented" if t < plan.finetune_at else "routed"
            if stage not in pairs:
                pairs[stage] = leaf_sample_pairs(net, X, stage == "augmented")
                ft_opt = plan.make_optimizer()
                if plan.leaf_fit == "ridge":
                    _fit_leaves_ridge(bank, X, y, *pairs[stage], plan.ridge)
            if plan.leaf_fit == "gradient" and "Theta" in trainable:
                _fit_leaves_gradient_epoch(bank, X, y, *pairs[stage], ft_opt, rng, plan.batch_size)
            eval_mode = SelectorMode.hardmax()
        report.epochs.append({"epoch": t, "k": k, "loss": _regression_loss(net, bank, X, y, eval_mode)})
        if t in snaps:
            _snapshot(report, t, net, X)

    tree = to_tree(net, bank, data.preprocessing())
    _snapshot(report, "final", tree, X)
    report.final = metrics.regression_summary(tree, data)
    report.tree = tree
    report.wall_clock = time.perf_counter() - t0
    return tree, report


def train_regression_ste(net: SemNet, bank: RegressorBank, data, plan: TrainPlan, hybrid: bool = False):
    """Straight-through baseline: hardmax forward, identity backward, every epoch.

    ``hybrid`` runs the top-k/regressor-1 variant instead: top-k selection and
    router gradients following ``plan``'s schedule, but only the top leaf's
    regressor is updated.
    """
    if hybrid:
        return train_regression(net, bank, data, plan, reg1=True)
    t0 = time.perf_counter()
    rng = np.random.default_rng(plan.seed)
    X, y = data.X_train, data.y_train
    params = {"A": net.A, "b": net.b, "Theta": bank.Theta}
    opt = plan.make_optimizer()
    mode = SelectorMode.ste()
    report = TrainReport("ste", plan.to_dict())
    snaps = set(plan.snapshot_epochs)
    _snapshot(report, "init", net, X)
    for t in range(plan.epochs):
        for batch in _batches(rng, X.shape[0], plan.batch_size):
            _, trace = reg_forward(net, bank, X[batch], mode)
            g = reg_backward(trace, y[batch])
            opt.step(params, {"A": g.gA, "b": g.gb, "Theta": g.gTheta})
        report.epochs.append({"epoch": t, "k": 1, "loss": _regression_loss(net, bank, X, y, mode)})
        if t in snaps:
            _snapshot(report, t, net, X)
    tree = to_tree(net, bank, data.preprocessing())
    _snapshot(report, "final", tree, X)
    report.final = metrics.regression_summary(tree, data)
    report.tree = tree
    report.wall_clock = time.perf_counter() - t0
    return tree, report


def train_classification(net: SemNet, data, plan: TrainPlan):
    """Minibatch cross-entropy descent on the router; leaf classes stay fixed."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(plan.seed)
    X, y = data.X_train, data.y_train
    params = {"A": net.A, "b": net.b}
    opt = plan.make_optimizer()
    report = TrainReport("classify", plan.to_dict())
    snaps = set(plan.snapshot_epochs)
    _snapshot(report, "init", net, X)
    for t in range(plan.epochs):
        for batch in _batches(rng, X.shape[0], plan.batch_size):
            _, trace = cls_forward(net, X[batch])
            g = cls_backward(trace, y[batch])
            opt.step(params, {"A": g.gA, "b": g.gb})
        _, trace = cls_forward(net, X)
        report.epochs.append({"epoch": t, "k": 1, "loss": cls_backward(trace, y).loss})
        if t in snaps:
            _snapshot(report, t, net, X)
    tree = to_tree(net, None, data.preprocessing())
    _snapshot(report, "final", tree, X)
    report.final = metrics.classification_summary(tree, data)
    report.tree = tree
    report.wall_clock = time.perf_counter() - t0
    return tree, report
