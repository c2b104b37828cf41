"""Both kernel backends against each other and against plain loops."""
import os
import subprocess
import sys

import numpy as np
import pytest
from conftest import BACKENDS, COMPILED

from semtree import _kernels_py
from semtree.tree import random_tree

needs_compiled = pytest.mark.skipif(COMPILED is None, reason="compiled extension not built")


def _loop_route(tree, x):
    if tree.m == 0:
        return 0
    node = 0
    while node >= 0:
        u = float(np.dot(tree.A[node], x) + tree.b[node])
        node = tree.topology.right[node] if u > 0 else tree.topology.left[node]
    return -1 - node


@pytest.mark.parametrize("K", BACKENDS)
def test_route_batch_matches_loop(K, rng):
    for height in range(0, 5):
        tree = random_tree(rng, height, 3)
        X = rng.normal(size=(200, 3))
        topo = tree.topology
        got = K.route_batch(topo.left, topo.right, np.ascontiguousarray(tree.A), tree.b, X)
        assert got.tolist() == [_loop_route(tree, x) for x in X]


@pytest.mark.parametrize("K", BACKENDS)
def test_route_ties_go_left(K):
    tree = random_tree(np.random.default_rng(0), 1, 2)
    A = np.array([[1.0, 0.0]])
    X = np.array([[0.0, 5.0], [1e-300, 0.0], [-1e-300, 0.0]])
    got = K.route_batch(tree.topology.left, tree.topology.right, A, np.zeros(1), X)
    assert got.tolist() == [0, 1, 0]


@pytest.mark.parametrize("K", BACKENDS)
def test_topk_ties_lower_index(K):
    S, support = K.topk_forward(np.array([[1.0, 3.0, 3.0, 3.0]]), 2, 0.5)
    assert support.tolist() == [[False, True, True, False]]
    assert S[0].tolist() == [0.0, 0.5, 0.5, 0.0]


@needs_compiled
def test_topk_parity(rng):
    for _ in range(50):
        n = int(rng.integers(1, 20))
        Z = np.round(rng.normal(size=(30, n)), 1)  # ties on purpose
        k, tau = int(rng.integers(1, n + 1)), float(rng.uniform(0.05, 3.0))
        S1, m1 = _kernels_py.topk_forward(Z, k, tau)
        S2, m2 = COMPILED.topk_forward(Z, k, tau)
        assert np.array_equal(m1, m2)
        assert np.allclose(S1, S2, rtol=1e-13, atol=1e-15)
        G = rng.normal(size=Z.shape)
        g1, g2 = _kernels_py.topk_backward(S1, G, tau), COMPILED.topk_backward(S2, G, tau)
        assert np.allclose(g1, g2, rtol=1e-12, atol=1e-14)
        assert np.all(g2[~m2] == 0.0)


@needs_compiled
def test_split_scan_parity(rng):
    for _ in range(50):
        n = int(rng.integers(2, 60))
        xs = np.sort(np.round(rng.normal(size=n), 1))
        min_leaf = int(rng.integers(1, 6))
        ys = rng.normal(size=n)
        a, b = _kernels_py.best_sse_split(xs, ys, min_leaf), COMPILED.best_sse_split(xs, ys, min_leaf)
        assert a[1] == b[1] and a[0] == pytest.approx(b[0], rel=1e-10, abs=1e-10)
        yc = rng.integers(0, 3, n).astype(np.int64)
        a, b = _kernels_py.best_gini_split(xs, yc, 3, min_leaf), COMPILED.best_gini_split(xs, yc, 3, min_leaf)
        assert a[1] == b[1] and a[0] == pytest.approx(b[0], rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("K", BACKENDS)
def test_midpoint_never_reaches_upper_value(K):
    a = 1.0
    b = np.nextafter(a, 2.0)
    xs = np.array([a, b])
    _, thr = K.best_sse_split(xs, np.array([0.0, 1.0]), 1)
    assert a <= thr < b


def test_pure_python_switch():
    env = dict(os.environ, SEMTREE_PURE_PYTHON="1")
    code = "from semtree._backend import BACKEND; print(BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env.pop("SEMTREE_PURE_PYTHON")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == ("cython" if COMPILED is not None else "python")


def test_benchmark_script_runs(capsys):
    import runpy
    from pathlib import Path

    script = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    bench = runpy.run_path(str(script))
    bench["main"](["--n", "500", "--repeat", "1"])
    assert "route_batch" in capsys.readouterr().out
