"""Best-first branch and bound over binary variables of an LP relaxation."""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import Infeasible, NodeLimit


@dataclass
class BnbProblem:
    """Binary program given through its relaxation.

    ``relax(lb, ub)`` solves the continuous relaxation with the given variable
    bounds and returns ``(x, objective)`` or raises Infeasible. ``is_feasible(x)``
    checks a rounded integral point against the original constraints.
    """
    n: int
    binary: np.ndarray
    relax: Callable[[np.ndarray, np.ndarray], tuple]
    is_feasible: Callable[[np.ndarray], bool] | None = None
    integrality_tol: float = 1e-6


@dataclass
class BnbResult:
    x: np.ndarray
    objective: float
    nodes: int
    gap: float


def solve_bnb(p: BnbProblem, gap_tol: float = 1e-9, node_limit: int = 20000) -> BnbResult:
    binary = np.asarray(p.binary, dtype=int)
    lb0 = np.zeros(p.n)
    ub0 = np.full(p.n, np.inf)
    ub0[binary] = 1.0
    counter = itertools.count()
    best_x, best_obj = None, np.inf
    heap = []
    nodes = 0

    def push(lb, ub):
        nonlocal nodes
        nodes += 1
        try:
            x, obj = p.relax(lb, ub)
        except Infeasible:
            return
        heapq.heappush(heap, (obj, next(counter), lb, ub, x))

    push(lb0, ub0)
    while heap:
        obj, _, lb, ub, x = heapq.heappop(heap)
        if obj >= best_obj - gap_tol * max(1.0, abs(best_obj)):
            break
        frac = np.abs(x[binary] - np.round(x[binary]))
        if frac.max(initial=0.0) <= p.integrality_tol:
            xi = x.copy()
            xi[binary] = np.round(x[binary])
            if p.is_feasible is None or p.is_feasible(xi):
                best_x, best_obj = xi, obj
                continue
        if nodes >= node_limit:
            raise NodeLimit(f"branch and bound exceeded {node_limit} nodes")
        # Most fractional binary; ties go to the lowest index.
        j = int(binary[np.argmax(-np.abs(x[binary] - 0.5))])
        if frac.max(initial=0.0) <= p.integrality_tol:
            # Integral but rejected by the oracle: branch on the first free binary.
            free = binary[lb[binary] < ub[binary]]
            if free.size == 0:
                continue
            j = int(free[0])
        for val in (0.0, 1.0):
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[j] = ub2[j] = val
            push(lb2, ub2)
    if best_x is None:
        raise Infeasible("no integral solution")
    lower = heap[0][0] if heap else best_obj
    return BnbResult(x=best_x, objective=float(best_obj), nodes=nodes,
                     gap=float(max(best_obj - lower, 0.0)))
