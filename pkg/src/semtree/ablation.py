"""Controlled studies: root-weight recovery and leaf utilization on imbalanced data."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .data import data_aware_tree, gen_imbalance
from .grad import RegressorBank, reg_backward, reg_forward
from .optim import Optimizer
from .selectors import SelectorMode
from .semnet import SemNet
from .train import TrainPlan, train_regression, train_regression_ste
from .tree import ObliqueTree, TreeTopology

TEACHER_ROOT = (-0.55, 0.45)
STUDENT_ROOT = (0.25, 0.25)


@dataclass
class RootTrajectory:
    method: str
    steps: list = field(default_factory=list)
    w: list = field(default_factory=list)
    loss: list = field(default_factory=list)

    @property
    def final_w(self):
        return np.asarray(self.w[-1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["step", "wx", "wy", "loss"])
        for step, (wx, wy), loss in zip(self.steps, self.w, self.loss):
            out.writerow([step, repr(wx), repr(wy), repr(loss)])
        return buf.getvalue()


@dataclass
class RootRecoveryReport:
    seed: int
    teacher_w: tuple
    teacher_root_bias: float
    init_w: tuple
    runs: dict

    def distance(self, method) -> float:
        return float(np.linalg.norm(self.runs[method].final_w - np.asarray(self.teacher_w)))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "teacher_w": list(self.teacher_w),
            "teacher_root_bias": self.teacher_root_bias,
            "init_w": list(self.init_w),
            "methods": {
                name: {
                    "final_w": run.final_w.tolist(),
                    "distance": self.distance(name),
                    "final_top1_loss": run.loss[-1],
                }
                for name, run in self.runs.items()
            },
        }


def root_teacher(seed, height=5, n_samples=30000, teacher_w=TEACHER_ROOT):
    """Teacher tree with a fixed root normal, and its noise-free samples on ``[-1, 1]^2``."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n_samples, 2))
    topo, A, b = data_aware_tree(rng, height, X, root_normal=np.asarray(teacher_w, dtype=np.float64))
    teacher = ObliqueTree(topo, A, b, theta=rng.standard_normal((topo.n, 2)), alpha=rng.standard_normal(topo.n))
    return teacher, X, teacher.predict_reg(X)


def _train_root(teacher, X, y, mode, init_w, epochs, lr, batch_size, seed, record_every):
    net = SemNet(teacher.topology, np.array(teacher.A), np.array(teacher.b))
    net.A[0] = init_w
    bank = RegressorBank.from_tree(teacher)
    top1 = SelectorMode.hardmax()
    opt = Optimizer("sgd", lr)
    rng = np.random.default_rng(seed)
    traj = RootTrajectory(mode.kind)

    def record(step):
        yhat, _ = reg_forward(net, bank, X, top1)
        traj.steps.append(step)
        traj.w.append((float(net.A[0, 0]), float(net.A[0, 1])))
        traj.loss.append(float(np.mean((yhat - y) ** 2)))

    record(0)
    step = 0
    N = X.shape[0]
    for _ in range(epochs):
        perm = rng.permutation(N)
        for start in range(0, N, batch_size):
            batch = perm[start:start + batch_size]
            _, trace = reg_forward(net, bank, X[batch], mode)
            g = reg_backward(trace, y[batch])
            w = net.A[0]
            opt.step({"w": w}, {"w": g.gA[0]})
            step += 1
            if step % record_every == 0:
                record(step)
    if traj.steps[-1] != step:
        record(step)
    return traj


def ablation_root_recovery(seed, epochs=10, lr=0.01, batch_size=128, k=2, tau=0.5,
                           init_w=STUDENT_ROOT, record_every=50, n_samples=30000) -> RootRecoveryReport:
    """Relearn only the root normal of a height-5 teacher under STE and under top-k.

    Every other parameter, including the root bias, is copied from the teacher
    and frozen. Both students start from ``init_w``, see the same minibatch
    order, and are scored with hard (top-1) routing.
    """
    teacher, X, y = root_teacher(seed, n_samples=n_samples)
    runs = {}
    for name, mode in (("ste", SelectorMode.ste()), ("topk", SelectorMode.topk(k, tau))):
        runs[name] = _train_root(teacher, X, y, mode, np.asarray(init_w, dtype=np.float64),
                                 epochs, lr, batch_size, seed, record_every)
    return RootRecoveryReport(seed, tuple(TEACHER_ROOT), float(teacher.b[0]), tuple(init_w), runs)


def utilization_study(seed, height=5, epochs=100, threshold=None, **plan_kwargs) -> dict:
    """Leaves holding more than ``N / (2n)`` training samples after top-4, top-4/reg-1 and STE training.

    All three methods start from the same router initialization and zero regressors.
    """
    data = gen_imbalance(seed, height=height)
    init = SemNet.init_random(TreeTopology.complete(height), data.d, np.random.default_rng(seed))
    plan = TrainPlan(epochs=epochs, seed=seed, **plan_kwargs)
    out = {}
    runners = (
        ("topk", lambda net, bank: train_regression(net, bank, data, plan)),
        ("topk_reg1", lambda net, bank: train_regression_ste(net, bank, data, plan, hybrid=True)),
        ("ste", lambda net, bank: train_regression_ste(net, bank, data, plan)),
    )
    for name, run in runners:
        tree, report = run(init.copy(), RegressorBank.zeros(init.n, data.d))
        hist = metrics.leaf_histogram(tree, data.X_train)
        out[name] = {
            "used_leaves": metrics.utilization_summary(hist, threshold),
            "counts": hist.counts.tolist(),
            "test_rmse": report.final["test_rmse"],
        }
    return out
