"""Independent reference solvers used by the tests."""
import itertools

import numpy as np

SIMPLEX_GRID = np.array([(a, b, 100 - a - b) for a in range(101) for b in range(101 - a)], float) / 100


def enumerate_association(cost, feasible, freq, compute, freq_cap, budget):
    """Exhaustive minimum over every UAV choice per (m, n); inf when nothing fits.

    All arrays are (M, K, N). Every assignment is scored at once with numpy.
    """
    M, K, N = cost.shape
    choices = np.array(list(itertools.product(range(K), repeat=M * N))).reshape(-1, M, N)   # (A, M, N)
    a = (choices[:, :, None, :] == np.arange(K)[None, None, :, None])                     # (A, M, K, N)
    ok = np.all(~a | feasible[None], axis=(1, 2, 3))
    ok &= np.all((a * freq[None]).sum(axis=1) <= freq_cap + 1e-9, axis=(1, 2))
    ok &= np.all((a * compute[None]).sum(axis=(1, 3)) <= np.asarray(budget)[None] + 1e-9, axis=1)
    if not ok.any():
        return np.inf
    return float((a * cost[None]).sum(axis=(1, 2, 3))[ok].min())


def grid_offload_minimum(W, caps, y):
    """Per-cell best split on the 0.01 simplex grid; valid when the UAV budget is slack."""
    total = 0.0
    for idx in np.ndindex(W.shape[:-1]):
        ok = np.all(SIMPLEX_GRID <= caps[idx] + 1e-12, axis=1)
        total += float(np.min(SIMPLEX_GRID[ok] @ (y[idx] ** 2 * W[idx])))
    return total
