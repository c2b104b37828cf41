"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 20000] [--repeat 5]

Each kernel runs on identical inputs under both backends; outputs are
checked for agreement before timings are reported.
"""
import argparse
import timeit

import numpy as np

from semtree import _kernels_py
from semtree.tree import random_tree

try:
    from semtree import _kernels as compiled
except ImportError:
    compiled = None


def workloads(n, rng):
    tree = random_tree(rng, 6, 8)
    topo = tree.topology
    A = np.ascontiguousarray(tree.A)
    X = rng.normal(size=(n, 8))
    Z = rng.normal(size=(n, 32))
    S, _ = _kernels_py.topk_forward(Z, 4, 0.5)
    G = rng.normal(size=Z.shape)
    xs = np.sort(rng.normal(size=n))
    ys = rng.normal(size=n)
    yc = rng.integers(0, 3, n).astype(np.int64)
    return {
        "route_batch (h=6, d=8)": lambda K: K.route_batch(topo.left, topo.right, A, tree.b, X),
        "topk_forward (n=32, k=4)": lambda K: K.topk_forward(Z, 4, 0.5),
        "topk_backward (n=32)": lambda K: K.topk_backward(S, G, 0.5),
        "best_sse_split": lambda K: K.best_sse_split(xs, ys, 5),
        "best_gini_split (3 classes)": lambda K: K.best_gini_split(xs, yc, 3, 5),
    }


def _agree(a, b):
    if isinstance(a, tuple):
        return all(_agree(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-12)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=20000, help="rows per kernel call")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    backends = [("python", _kernels_py)] + ([("cython", compiled)] if compiled is not None else [])
    if compiled is None:
        print("compiled extension not built; timing the numpy fallback only")
    print(f"{'kernel':30s}" + "".join(f"{name:>12s}" for name, _ in backends) + ("   speedup" if compiled else ""))
    for label, call in workloads(args.n, np.random.default_rng(args.seed)).items():
        if compiled is not None and not _agree(call(_kernels_py), call(compiled)):
            raise SystemExit(f"{label}: backends disagree")
        best = []
        for _, K in backends:
            best.append(min(timeit.repeat(lambda: call(K), number=1, repeat=args.repeat)))
        row = f"{label:30s}" + "".join(f"{t * 1e3:10.2f}ms" for t in best)
        if compiled is not None:
            row += f"{best[0] / best[1]:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
