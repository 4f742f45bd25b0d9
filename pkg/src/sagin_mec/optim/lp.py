"""Dense two-phase primal simplex for small linear programs.

    minimise   c @ x
    subject to A_ub @ x <= b_ub,  A_eq @ x == b_eq,  lb <= x <= ub

Lower bounds must be finite; infinite upper bounds are allowed. Variables with
lb == ub are eliminated before the solve. Pricing is Dantzig's rule, switching to
Bland's rule after a run of degenerate pivots so the method cannot cycle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import Infeasible, InvalidArgument, IterationLimit, Unbounded


@dataclass
class LinearProgram:
    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub = np.zeros((0, n)) if self.A_ub is None else np.atleast_2d(np.asarray(self.A_ub, float))
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, float).ravel()
        self.A_eq = np.zeros((0, n)) if self.A_eq is None else np.atleast_2d(np.asarray(self.A_eq, float))
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, float).ravel()
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, float).ravel().copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, float).ravel().copy()
        if self.A_ub.shape != (self.b_ub.size, n) or self.A_eq.shape != (self.b_eq.size, n):
            raise InvalidArgument("inconsistent LP dimensions")
        if self.lb.size != n or self.ub.size != n:
            raise InvalidArgument("bound vectors must match the number of variables")
        if not np.all(np.isfinite(self.lb)):
            raise InvalidArgument("lower bounds must be finite")
        if np.any(self.lb > self.ub):
            raise Infeasible("a lower bound exceeds its upper bound")

    @property
    def n(self) -> int:
        return self.c.size


@dataclass
class LpResult:
    x: np.ndarray
    objective: float
    iterations: int
    slack_ub: np.ndarray
    duals_ub: np.ndarray          # <= 0 for a minimisation
    duals_eq: np.ndarray
    reduced_costs: np.ndarray     # c - A^T y over the original variables
    status: str = "optimal"


class _Tableau:
    def __init__(self, T, basis, tol, max_iter):
        self.T = T
        self.basis = basis
        self.tol = tol
        self.max_iter = max_iter
        self.iterations = 0

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j

    def run(self, allowed):
        """Optimise the last row of the tableau over columns in ``allowed``."""
        T, tol = self.T, self.tol
        degenerate = 0
        while True:
            if self.iterations >= self.max_iter:
                raise IterationLimit(f"simplex exceeded {self.max_iter} pivots")
            cost = T[-1, :-1]
            cand = np.flatnonzero(allowed & (cost < -tol))
            if cand.size == 0:
                return
            bland = degenerate > 50
            j = int(cand[0]) if bland else int(cand[np.argmin(cost[cand])])
            col = T[:-1, j]
            pos = col > tol
            if not np.any(pos):
                raise Unbounded("objective is unbounded below")
            ratios = np.full(col.shape, np.inf)
            ratios[pos] = T[:-1, -1][pos] / col[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
            r = int(ties[np.argmin(self.basis[ties])]) if bland else int(ties[np.argmax(col[ties])])
            degenerate = degenerate + 1 if best <= tol else 0
            self.pivot(r, j)
            self.iterations += 1


def solve_lp(lp: LinearProgram, tol: float = 1e-9, max_iter: int = 50000) -> LpResult:
    """Solve ``lp``; raises Infeasible, Unbounded or IterationLimit.

    Constraint rows are equilibrated to unit max-norm first so the absolute
    pivot tolerances mean the same thing for rows measured in Hz or in J.
    """
    r_ub = np.abs(lp.A_ub).max(axis=1, initial=0.0)
    r_eq = np.abs(lp.A_eq).max(axis=1, initial=0.0)
    r_ub[r_ub == 0] = 1.0
    r_eq[r_eq == 0] = 1.0
    scaled = LinearProgram(lp.c, lp.A_ub / r_ub[:, None], lp.b_ub / r_ub, lp.A_eq / r_eq[:, None],
                           lp.b_eq / r_eq, lp.lb, lp.ub)
    res = _solve_equilibrated(scaled, tol, max_iter)
    res.duals_ub = res.duals_ub / r_ub
    res.duals_eq = res.duals_eq / r_eq
    res.slack_ub = lp.b_ub - lp.A_ub @ res.x
    return res


def _solve_equilibrated(lp: LinearProgram, tol: float, max_iter: int) -> LpResult:
    fixed = lp.ub - lp.lb <= 0
    free = np.flatnonzero(~fixed)
    shift = lp.lb.copy()
    shift[fixed] = lp.lb[fixed]

    # z = x - lb on the free variables.
    A_ub = lp.A_ub[:, free]
    b_ub = lp.b_ub - lp.A_ub @ shift
    A_eq = lp.A_eq[:, free]
    b_eq = lp.b_eq - lp.A_eq @ shift
    span = (lp.ub - lp.lb)[free]
    bounded = np.flatnonzero(np.isfinite(span))
    nf = free.size
    if bounded.size:
        B_rows = np.zeros((bounded.size, nf))
        B_rows[np.arange(bounded.size), bounded] = 1.0
        A_ub = np.vstack([A_ub, B_rows])
        b_ub = np.concatenate([b_ub, span[bounded]])
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]

    # Standard form: [A_ub I; A_eq 0] [z; s] = b with every row made b >= 0.
    m = m_ub + m_eq
    nz = nf + m_ub
    A = np.zeros((m, nz))
    A[:m_ub, :nf] = A_ub
    A[:m_ub, nf:] = np.eye(m_ub)
    A[m_ub:, :nf] = A_eq
    b = np.concatenate([b_ub, b_eq])
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b = b * sign

    # Rows whose slack already forms a feasible basic column need no artificial.
    basis = np.full(m, -1)
    for i in range(m_ub):
        if sign[i] > 0:
            basis[i] = nf + i
    need = np.flatnonzero(basis < 0)
    n_art = need.size
    ncol = nz + n_art
    T = np.zeros((m + 1, ncol + 1))
    T[:m, :nz] = A
    T[:m, -1] = b
    for a_i, i in enumerate(need):
        T[i, nz + a_i] = 1.0
        basis[i] = nz + a_i

    tab = _Tableau(T, basis, tol, max_iter)
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if n_art:
        T[-1, :] = 0.0
        T[-1, nz:ncol] = 1.0
        for i in need:
            T[-1] -= T[i]
        tab.run(np.ones(ncol, dtype=bool))
        if -T[-1, -1] > tol * scale * 10:
            raise Infeasible(f"phase one ended with infeasibility {-T[-1, -1]:.3g}")
        # Drive remaining artificials out of the basis or drop redundant rows.
        keep = np.ones(m + 1, dtype=bool)
        for r in range(m):
            if tab.basis[r] >= nz:
                row = T[r, :nz]
                cands = np.flatnonzero(np.abs(row) > tol)
                if cands.size:
                    tab.pivot(r, int(cands[0]))
                else:
                    keep[r] = False
        T = T[keep][:, np.r_[0:nz, ncol]]
        tab.T = T
        tab.basis = tab.basis[keep[:-1]]
        row_map = np.flatnonzero(keep[:-1])
    else:
        T = np.delete(T, np.s_[nz:ncol], axis=1) if ncol > nz else T
        tab.T = T
        row_map = np.arange(m)

    # Phase two objective row.
    c_std = np.concatenate([lp.c[free], np.zeros(m_ub)])
    T[-1, :] = 0.0
    T[-1, :nz] = c_std
    for r, j in enumerate(tab.basis):
        T[-1] -= c_std[j] * T[r]
    tab.run(np.ones(nz, dtype=bool))

    zs = np.zeros(nz)
    zs[tab.basis] = T[:-1, -1]
    zs = np.maximum(zs, 0.0)
    x = shift.copy()
    x[free] = lp.lb[free] + zs[:nf]
    x = np.minimum(x, lp.ub)

    # Duals from the final basis: B^T y = c_B on the kept standard-form rows.
    y_kept = np.zeros(len(row_map))
    if len(row_map):
        Bm = A[row_map][:, tab.basis]
        try:
            y_kept = np.linalg.solve(Bm.T, c_std[tab.basis])
        except np.linalg.LinAlgError:
            y_kept = np.linalg.lstsq(Bm.T, c_std[tab.basis], rcond=None)[0]
    y = np.zeros(m)
    y[row_map] = y_kept
    y = y * sign
    duals_ub = y[: lp.b_ub.size]
    duals_eq = y[m_ub:]
    reduced = lp.c - lp.A_ub.T @ duals_ub - lp.A_eq.T @ duals_eq
    slack = lp.b_ub - lp.A_ub @ x
    return LpResult(x=x, objective=float(lp.c @ x), iterations=tab.iterations,
                    slack_ub=slack, duals_ub=duals_ub, duals_eq=duals_eq,
                    reduced_costs=reduced)
