"""Pure numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_kernels`` module; used when
the extension is not built or ``SEMTREE_PURE_PYTHON`` is set.
"""
import numpy as np


def route_batch(left, right, A, b, X):
    """Walk every row of ``X`` down the tree; children < 0 encode leaf ``-1 - c``."""
    N = X.shape[0]
    if left.shape[0] == 0:
        return np.zeros(N, dtype=np.int64)
    node = np.zeros(N, dtype=np.int64)
    active = np.arange(N)
    while active.size:
        cur = node[active]
        u = np.einsum("ij,ij->i", X[active], A[cur]) + b[cur]
        node[active] = np.where(u > 0, right[cur], left[cur])
        active = active[node[active] >= 0]
    return -1 - node


def topk_forward(Z, k, tau):
    """Masked temperature softmax over the ``k`` largest entries of each row.

    Ties for membership go to the lower index.
    """
    N, n = Z.shape
    order = np.argsort(-Z, axis=1, kind="stable")[:, :k]
    rows = np.arange(N)[:, None]
    zk = Z[rows, order]
    e = np.exp((zk - zk[:, :1]) / tau)
    S = np.zeros_like(Z)
    S[rows, order] = e / e.sum(axis=1, keepdims=True)
    support = np.zeros(Z.shape, dtype=bool)
    support[rows, order] = True
    return S, support


def topk_backward(S, G, tau):
    """Softmax Jacobian-vector product; entries with ``S == 0`` stay exactly 0."""
    inner = np.einsum("ij,ij->i", S, G)[:, None]
    return S * (G - inner) / tau


def _midpoint(a, b):
    # adjacent floats can round the midpoint up to b, which would route b left
    t = 0.5 * (a + b)
    return float(t if t < b else a)


def best_sse_split(xs, ys, min_leaf):
    """Scan a sorted feature column for the split minimizing total SSE.

    Returns ``(sse, threshold)``; ``sse`` is ``inf`` if no valid split exists.
    """
    n = xs.shape[0]
    if n < 2 * min_leaf:
        return np.inf, 0.0
    cs = np.cumsum(ys)
    cs2 = np.cumsum(ys * ys)
    tot, tot2 = cs[-1], cs2[-1]
    nl = np.arange(1, n)
    nr = n - nl
    sl, sl2 = cs[:-1], cs2[:-1]
    sse = (sl2 - sl * sl / nl) + ((tot2 - sl2) - (tot - sl) ** 2 / nr)
    ok = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not ok.any():
        return np.inf, 0.0
    sse = np.where(ok, sse, np.inf)
    i = int(np.argmin(sse))
    return float(sse[i]), _midpoint(xs[i], xs[i + 1])


def best_gini_split(xs, ys, n_classes, min_leaf):
    """Scan a sorted feature column for the split minimizing size-weighted Gini."""
    n = xs.shape[0]
    if n < 2 * min_leaf:
        return np.inf, 0.0
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), ys] = 1.0
    cl = np.cumsum(onehot, axis=0)[:-1]
    cr = cl[-1] + onehot[-1] - cl
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    score = nl - (cl * cl).sum(axis=1) / nl + nr - (cr * cr).sum(axis=1) / nr
    ok = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not ok.any():
        return np.inf, 0.0
    score = np.where(ok, score, np.inf)
    i = int(np.argmin(score))
    return float(score[i]), _midpoint(xs[i], xs[i + 1])
