"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (also collected
into the terminal summary) and then asserts at the stated tolerance.
"""
import os
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES, off_boundary

from semtree import cli
from semtree.ablation import STUDENT_ROOT, TEACHER_ROOT, ablation_root_recovery, utilization_study
from semtree.cart import fit_cart
from semtree.data import gen_teacher, load_csv
from semtree.grad import RegressorBank, cls_backward, cls_forward, cls_loss, reg_backward, reg_forward, reg_loss
from semtree.metrics import rmse
from semtree.selectors import SelectorMode, hardmax, ste, topk
from semtree.semnet import SemNet, check_theorem1, forward_logits, from_tree, to_tree
from semtree.train import TrainPlan, train_classification, train_regression
from semtree.tree import TreeTopology, random_tree

TEACHER_SEEDS = range(5)


def verdict(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


_teacher_runs = {}


def teacher_run(seed):
    """Full default training of a height-5 tree on the height-5 teacher data, cached per seed."""
    if seed not in _teacher_runs:
        _, data = gen_teacher(seed, height=5, d=2, n_samples=30000)
        topo = TreeTopology.complete(5)
        net = SemNet.init_random(topo, data.d, np.random.default_rng(seed))
        tree, report = train_regression(net, RegressorBank.zeros(topo.n, data.d), data, TrainPlan(seed=seed))
        _teacher_runs[seed] = (data, tree, report)
    return _teacher_runs[seed]


def test_criterion_1_logit_argmax_equals_routing():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    agree = total = 0
    for _ in range(1000):
        tree = random_tree(rng, int(rng.integers(1, 7)), int(rng.integers(1, 17)))
        X = off_boundary(rng, tree.A, tree.b, 100, tree.d)
        z, _ = forward_logits(from_tree(tree), X)
        agree += int(np.sum(np.argmax(z, axis=1) == tree.route(X)))
        total += X.shape[0]
        assert check_theorem1(from_tree(tree), tree, X)
    secs = time.perf_counter() - t0
    verdict(1, agree == total and secs < 30, f"{agree}/{total} inputs agree in {secs:.1f}s")


def test_criterion_2_round_trip_field_exact():
    rng = np.random.default_rng(2)
    exact = 0
    for i in range(1000):
        task = "classify" if i % 2 else "regress"
        tree = random_tree(rng, int(rng.integers(0, 7)), int(rng.integers(1, 17)), task,
                           n_classes=int(rng.integers(2, 5)))
        payload = None if task == "classify" else (tree.theta, tree.alpha)
        back = to_tree(from_tree(tree), payload)
        same = back == tree and np.array_equal(back.A, tree.A) and np.array_equal(back.b, tree.b)
        exact += int(same)
    verdict(2, exact == 1000, f"{exact}/1000 trees round-trip exactly")


def test_criterion_3_selector_identities():
    rng = np.random.default_rng(3)
    bad = 0
    for i in range(100_000):
        z = rng.normal(size=int(rng.integers(1, 65)))
        if i % 4 == 0:
            z = np.round(z, 1)  # exercise ties
        tau = float(np.exp(rng.uniform(np.log(1e-3), np.log(1e3))))
        h = hardmax(z).s
        if not (np.array_equal(topk(z, 1, tau).s, h) and np.array_equal(ste(z).s, h)):
            bad += 1
    verdict(3, bad == 0, f"{100_000 - bad}/100000 vectors identical")


def _numeric(f, param, eps=1e-5):
    grad = np.zeros_like(param)
    for idx in np.ndindex(param.shape):
        old = param[idx]
        param[idx] = old + eps
        up = f()
        param[idx] = old - eps
        down = f()
        param[idx] = old
        grad[idx] = (up - down) / (2 * eps)
    return grad


def _rel(a, b):
    return float(np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-8))


def _regular(z, u, groups=None, k=None, gap=1e-3):
    """Far from every ReLU kink, top-k boundary, and per-class argmax tie."""
    if np.abs(u).min() <= gap:
        return False
    if k is not None and k < z.shape[1]:
        zs = -np.sort(-z, axis=1)
        if (zs[:, k - 1] - zs[:, k]).min() <= gap:
            return False
    for g in groups or ():
        if g.sum() > 1:
            s = np.sort(z[:, g], axis=1)
            if (s[:, -1] - s[:, -2]).min() <= gap:
                return False
    return True


def test_criterion_4_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst, points = 0.0, 0
    kinds = ["classify", ("regress", 2), ("regress", 4)]
    while points < 500:
        kind = kinds[points % 3]
        height, d, N = int(rng.integers(1, 4)), int(rng.integers(1, 5)), 3
        if kind == "classify":
            c = int(rng.integers(2, 4))
            topo = TreeTopology.complete(max(height, 2))
            net = SemNet.init_random(topo, d, rng, n_classes=c)
            net.A[:] = rng.normal(size=net.A.shape)
            net.b[:] = rng.normal(size=net.b.shape)
            X, labels = rng.normal(size=(N, d)), rng.integers(0, c, N)
            z, tr = forward_logits(net, X)
            if not _regular(z, tr.u, [net.leaf_classes == j for j in range(c)]):
                continue
            _, ct = cls_forward(net, X)
            g = cls_backward(ct, labels)
            f = lambda: cls_loss(net, X, labels)  # noqa: E731
            errs = [_rel(g.gA, _numeric(f, net.A)), _rel(g.gb, _numeric(f, net.b))]
        else:
            k = kind[1]
            topo = TreeTopology.complete(max(height, 2))
            net = SemNet(topo, rng.normal(size=(topo.m, d)), rng.normal(size=topo.m))
            bank = RegressorBank(rng.normal(size=(topo.n, d + 1)))
            X, y = rng.normal(size=(N, d)), rng.normal(size=N)
            z, tr = forward_logits(net, X)
            if not _regular(z, tr.u, k=k):
                continue
            mode = SelectorMode.topk(k, float(rng.uniform(0.2, 2.0)))
            _, rt = reg_forward(net, bank, X, mode)
            g = reg_backward(rt, y)
            f = lambda: reg_loss(net, bank, X, y, mode)  # noqa: E731
            errs = [_rel(g.gA, _numeric(f, net.A)), _rel(g.gb, _numeric(f, net.b)),
                    _rel(g.gTheta, _numeric(f, bank.Theta))]
        worst = max(worst, *errs)
        points += 1
    secs = time.perf_counter() - t0
    verdict(4, worst < 1e-4 and secs < 60, f"worst relative error {worst:.2e} over {points} points in {secs:.1f}s")


def test_criterion_5_teacher_recovery():
    t0 = time.perf_counter()
    scores = [teacher_run(s)[2].final["test_rmse"] for s in TEACHER_SEEDS]
    secs = time.perf_counter() - t0
    hits = sum(r < 0.05 for r in scores)
    detail = f"{hits}/5 seeds under 0.05 test RMSE ({', '.join(f'{r:.3f}' for r in scores)}) in {secs:.0f}s"
    verdict(5, hits >= 4 and secs < 300, detail)


def test_criterion_6_root_recovery():
    t0 = time.perf_counter()
    wins, rows = 0, []
    for seed in range(10):
        rep = ablation_root_recovery(seed, lr=0.01, init_w=STUDENT_ROOT)
        assert rep.teacher_w == tuple(TEACHER_ROOT)
        dk, ds = rep.distance("topk"), rep.distance("ste")
        wins += int(dk < ds)
        rows.append(f"{dk:.3f}/{ds:.3f}")
    secs = time.perf_counter() - t0
    verdict(6, wins >= 8 and secs < 300, f"top-k closer in {wins}/10 seeds (topk/ste: {' '.join(rows)}) in {secs:.0f}s")


def test_criterion_7_leaf_utilization():
    t0 = time.perf_counter()
    used = {"topk": [], "topk_reg1": [], "ste": []}
    for seed in range(10):
        res = utilization_study(seed, height=5)
        for name in used:
            used[name].append(res[name]["used_leaves"])
    secs = time.perf_counter() - t0
    m = {name: float(np.mean(v)) for name, v in used.items()}
    ok = m["topk"] >= m["topk_reg1"] >= m["ste"] and m["topk"] > m["ste"] and secs < 600
    detail = (f"mean used leaves topk {m['topk']:.1f}, topk/reg-1 {m['topk_reg1']:.1f}, "
              f"ste {m['ste']:.1f} in {secs:.0f}s")
    verdict(7, ok, detail)


BENCHMARKS = [
    ("banknote", "SEMTREE_BANKNOTE_CSV", "SEMTREE_BANKNOTE_LABEL", 3, 0.97),
    ("blood", "SEMTREE_BLOOD_CSV", "SEMTREE_BLOOD_LABEL", 4, 0.75),
]


def _last_column(path):
    with open(path) as fh:
        return fh.readline().strip().split(",")[-1]


@pytest.mark.parametrize("name,path_var,label_var,height,target", BENCHMARKS, ids=[b[0] for b in BENCHMARKS])
def test_criterion_8_small_benchmarks(name, path_var, label_var, height, target):
    path = os.environ.get(path_var)
    if not path:
        line = f"criterion 8: SKIP {name}: set {path_var} to a CSV to run it"
        print(line)
        ACCEPTANCE_LINES.append(line)
        pytest.skip(f"{path_var} not set")
    label = os.environ.get(label_var) or _last_column(path)
    accs = []
    for seed in range(5):
        data = load_csv(path, label, "classify", 0.2, seed)
        net = SemNet.init_random(TreeTopology.complete(height), data.d, np.random.default_rng(seed),
                                 n_classes=data.n_classes)
        _, report = train_classification(net, data, TrainPlan(seed=seed))
        accs.append(report.final["test_accuracy"])
    mean = float(np.mean(accs))
    verdict(8, mean >= target, f"{name} height {height}: mean test accuracy {mean:.3f} (need {target})")


def test_criterion_9_oblique_beats_cart():
    rows, wins = [], 0
    for seed in TEACHER_SEEDS:
        data, tree, report = teacher_run(seed)
        cart = min(rmse(fit_cart(data, depth), data.X_test, data.y_test) for depth in range(1, 11))
        ours = report.final["test_rmse"]
        wins += int(ours < cart)
        rows.append(f"{ours:.3f}/{cart:.3f}")
    verdict(9, wins == 5, f"oblique beats best CART (depth <= 10) in {wins}/5 seeds (ours/cart: {' '.join(rows)})")


def test_criterion_10_determinism(tmp_path):
    csv = tmp_path / "teacher.csv"
    assert cli.main(["gen", "teacher", "--seed", "7", "--height", "4", "--samples", "4000", "--out", str(csv)]) == 0
    blobs = tmp_path / "blobs.csv"
    assert cli.main(["gen", "blobs", "--seed", "7", "--out", str(blobs)]) == 0
    configs = {
        "topk": ["--task", "regress", "--data", str(csv), "--height", "4"],
        "ste": ["--task", "regress", "--data", str(csv), "--height", "4", "--selector", "ste"],
        "classify": ["--task", "classify", "--data", str(blobs), "--height", "2"],
    }
    same = 0
    for name, args in configs.items():
        files = []
        for run in ("a", "b"):
            out, rep = tmp_path / f"{name}_{run}.json", tmp_path / f"{name}_{run}_report.json"
            assert cli.main(["train", *args, "--label", "y", "--epochs", "20", "--seed", "3",
                             "--out", str(out), "--report", str(rep)]) == 0
            files.append((out.read_bytes(), rep.read_bytes()))
        same += int(files[0] == files[1])
    verdict(10, same == len(configs), f"{same}/{len(configs)} configurations byte-identical across reruns")
