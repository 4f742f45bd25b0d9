"""Log-barrier path following with damped Newton centring steps.

    minimise f(x)  subject to  c_i(x) <= 0 (smooth convex),  A x = b

Constraint blocks return values and a Jacobian (dense or scipy.sparse); the
Newton system is assembled sparse and factorised dense (sparse LU when large).
Variables are scaled by ``x_scale`` and the objective by its magnitude at the
start point, so tolerances are relative. A phase-one problem is solved when the
start is not strictly feasible. Late in the path the barrier value loses the
resolution to see a Newton decrease, so the line search then falls back to the
directional derivative; a last Newton step with primal-dual multipliers gives
the reported stationarity residual.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import IterationLimit, NoStrictInterior, NumericalBreakdown

ValueJac = Callable[[np.ndarray], tuple]
SPARSE_THRESHOLD = 400

HessFn = Callable[[np.ndarray, np.ndarray], object]


@dataclass
class ConstraintBlock:
    """A group of inequality rows c(x) <= 0.

    ``fn(x)`` returns ``(values, jacobian)``; ``hess(x, w)`` returns the
    weighted sum of row Hessians (a 1-D array means a diagonal), or is None
    for affine rows. Values may be
    ``inf`` outside the function's domain.
    """
    name: str
    fn: ValueJac
    hess: HessFn | None = None
    values: Callable[[np.ndarray], np.ndarray] | None = None   # cheap value-only path

    def value(self, x):
        return self.values(x) if self.values is not None else self.fn(x)[0]


@dataclass
class SmoothConvexProgram:
    n: int
    objective: ValueJac                      # x -> (f, grad)
    objective_hess: Callable[[np.ndarray], object]
    constraints: Sequence[ConstraintBlock]
    x0: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    names: dict = field(default_factory=dict)


@dataclass
class ConvexResult:
    x: np.ndarray
    objective: float
    kkt_residual: float
    duality_gap: float
    multipliers: np.ndarray
    outer_objectives: list
    newton_steps: int
    phase_one: bool = False


def _to_dense(M, shape):
    if M is None:
        return np.zeros(shape)
    if sp.issparse(M):
        return M.toarray()
    return np.asarray(M, dtype=float)


class _Scaled:
    """The program in scaled variables u = x / x_scale with a normalised objective."""

    def __init__(self, prog: SmoothConvexProgram, f_scale=None):
        self.p = prog
        self.n = prog.n
        self.s = np.ones(prog.n) if prog.x_scale is None else np.asarray(prog.x_scale, float)
        self.S = sp.diags(self.s)
        f0, g0 = prog.objective(np.asarray(prog.x0, float))
        if f_scale is None:
            # Normalise by |f(x0)|; at a zero objective fall back to the scaled gradient size.
            f_scale = abs(f0) or float(np.abs(np.asarray(g0, float) * self.s).max(initial=0.0)) or 1.0
        self.fs = f_scale
        if prog.A_eq is not None and len(prog.A_eq):
            self.A = np.asarray(prog.A_eq, float) * self.s[None, :]
            self.b = np.asarray(prog.b_eq, float)
        else:
            self.A = np.zeros((0, prog.n))
            self.b = np.zeros(0)

    def x(self, u):
        return u * self.s

    def f(self, u):
        v, g = self.p.objective(self.x(u))
        return v / self.fs, np.asarray(g, float) * self.s / self.fs

    def f_hess(self, u):
        return _scale_hess(self.p.objective_hess(self.x(u)), self.s, self.n) / self.fs

    def cons(self, u):
        x = self.x(u)
        vals, jacs = [], []
        for blk in self.p.constraints:
            c, J = blk.fn(x)
            vals.append(np.atleast_1d(np.asarray(c, float)))
            jacs.append(J if sp.issparse(J) else sp.csr_matrix(np.atleast_2d(J)))
        self.sizes = [v.size for v in vals]
        if not vals:
            return np.zeros(0), sp.csr_matrix((0, self.n))
        return np.concatenate(vals), (sp.vstack(jacs, format="csr") @ self.S).tocsr()

    def cons_values(self, u):
        x = self.x(u)
        return np.concatenate([np.atleast_1d(np.asarray(b.value(x), float))
                               for b in self.p.constraints]) if self.p.constraints else np.zeros(0)

    def cons_hess(self, u, w):
        """Weighted constraint Hessian; call after ``cons`` at the same point."""
        x = self.x(u)
        diag = np.zeros(self.n)
        mats = []
        start = 0
        for blk, m in zip(self.p.constraints, self.sizes):
            if blk.hess is not None:
                H = blk.hess(x, w[start:start + m])
                if isinstance(H, np.ndarray) and H.ndim == 1:
                    diag += H
                elif sp.issparse(H) and H.format == "dia" and H.offsets.tolist() == [0]:
                    diag += H.diagonal()
                else:
                    mats.append(sp.csr_matrix(H))
            start += m
        out = sp.diags(diag * self.s ** 2)
        for H in mats:
            out = out + self.S @ H @ self.S
        return out


def _scale_hess(H, s, n):
    """S H S for a Hessian given as a 1-D diagonal, dense or sparse matrix."""
    if isinstance(H, np.ndarray) and H.ndim == 1:
        return sp.diags(H * s ** 2)
    if sp.issparse(H) and H.format == "dia" and H.offsets.tolist() == [0]:
        return sp.diags(H.diagonal() * s ** 2)
    S = sp.diags(s)
    return S @ sp.csr_matrix(H) @ S


def _solve_kkt(H, A, rhs):
    n = H.shape[0]
    m = A.shape[0]
    if n + m > SPARSE_THRESHOLD and sp.issparse(H):
        # Large systems are mostly block diagonal; a sparse LU is far cheaper.
        K = sp.bmat([[H, sp.csr_matrix(A).T], [sp.csr_matrix(A), None]], format="csc") if m else H.tocsc()
        for reg in (0.0, 1e-10, 1e-8):
            Kr = K
            if reg:
                d = np.concatenate([np.full(n, reg * (1.0 + abs(H.diagonal()).max())), np.zeros(m)])
                Kr = (K + sp.diags(d)).tocsc()
            try:
                z = spla.splu(Kr).solve(np.concatenate([rhs, np.zeros(m)]))
            except RuntimeError:
                continue
            if np.all(np.isfinite(z)):
                return z[:n], z[n:]
    Hd = H.toarray() if sp.issparse(H) else np.asarray(H)
    for reg in (0.0, 1e-10, 1e-8, 1e-6):
        Hr = Hd + reg * (1.0 + np.abs(np.diag(Hd)).max(initial=0.0)) * np.eye(n) if reg else Hd
        try:
            if m == 0:
                L = np.linalg.cholesky(Hr)
                z = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
                if np.all(np.isfinite(z)):
                    return z, np.zeros(0)
            else:
                K = np.block([[Hr, A.T], [A, np.zeros((m, m))]])
                z = np.linalg.solve(K, np.concatenate([rhs, np.zeros(m)]))
                if np.all(np.isfinite(z)):
                    return z[:n], z[n:]
        except np.linalg.LinAlgError:
            continue
    raise NumericalBreakdown("Newton system is singular")


def _barrier(P: _Scaled, u0, t0, mu, gap_tol, newton_tol, max_steps, stop=None):
    u = np.asarray(u0, float).copy()
    c, _ = P.cons(u)
    m = c.size
    if m and not np.all(c < 0):
        raise NoStrictInterior("start point is not strictly feasible")
    t = t0
    steps = 0
    history = []
    while True:
        for _ in range(max_steps):
            f, g = P.f(u)
            c, J = P.cons(u)
            inv = -1.0 / c
            grad = t * g + J.T @ inv
            H = t * P.f_hess(u) + J.T @ sp.diags(inv ** 2) @ J + P.cons_hess(u, inv)
            du, _ = _solve_kkt(H, P.A, -grad)
            # du' H du avoids the cancellation in -grad' du when equalities are present.
            lam2 = float(du @ (H @ du))
            if lam2 / 2 <= newton_tol or np.all(np.abs(du) <= 1e-15 * (1 + np.abs(u))):
                break
            phi0 = t * f - np.sum(np.log(-c))
            noise = 1e-12 * max(1.0, abs(phi0))
            step = 1.0
            accepted = False
            while step > 1e-14:
                un = u + step * du
                cn = P.cons_values(un)
                if np.all(cn < 0):
                    fn, gn = P.f(un)
                    phin = t * fn - np.sum(np.log(-cn))
                    if not np.isfinite(phin):
                        pass
                    elif 0.25 * step * lam2 > noise:
                        if phin <= phi0 - 0.25 * step * lam2:
                            accepted = True
                            break
                    else:
                        # The predicted decrease is below roundoff in the value, but the
                        # slope is still resolvable; a non-positive slope at the trial
                        # point means the convex barrier function went down on the segment.
                        _, Jn = P.cons(un)
                        if t * (gn @ du) + (Jn @ du) @ (-1.0 / cn) <= 0:
                            accepted = True
                            break
                step *= 0.5
            if not accepted:
                break
            u = un
            steps += 1
            if stop is not None and stop(u):
                return u, t, steps, history
        else:
            raise IterationLimit(f"centring did not converge within {max_steps} Newton steps")
        history.append(P.f(u)[0] * P.fs)
        if stop is not None and stop(u):
            return u, t, steps, history
        if m == 0 or m / t < gap_tol:
            return u, t, steps, history
        t *= mu


def _phase_one(P: _Scaled, u0, settings):
    """Find a strictly feasible point by minimising the maximum constraint value."""
    c0 = P.cons_values(u0)
    if not np.all(np.isfinite(c0)):
        raise NoStrictInterior("start point lies outside a constraint's domain")
    s0 = float(c0.max()) + 1.0
    n = P.n

    def obj(z):
        g = np.zeros(n + 1)
        g[-1] = 1.0
        return z[-1], g

    def cons_fn(z):
        c, J = P.cons(z[:n])
        J = sp.hstack([J, -np.ones((c.size, 1))]).tocsr()
        # Floor on the max violation keeps the auxiliary problem bounded.
        c = np.concatenate([c - z[-1], [-z[-1] - 1.0]])
        floor = sp.csr_matrix(([-1.0], ([0], [n])), shape=(1, n + 1))
        return c, sp.vstack([J, floor]).tocsr()

    def cons_h(z, w):
        H = P.cons_hess(z[:n], w[:-1])
        return sp.block_diag([H, sp.csr_matrix((1, 1))]).tocsr()

    A = np.hstack([P.A, np.zeros((P.A.shape[0], 1))]) if P.A.size else None
    prog = SmoothConvexProgram(
        n=n + 1, objective=obj, objective_hess=lambda z: sp.csr_matrix((n + 1, n + 1)),
        constraints=[ConstraintBlock("phase1", cons_fn, cons_h)],
        x0=np.concatenate([u0, [s0]]), A_eq=A, b_eq=P.b if A is not None else None)
    Q = _Scaled(prog, f_scale=1.0)

    def stop(z):
        return float(P.cons_values(z[:n]).max()) < -1e-12

    z, _, steps, _ = _barrier(Q, np.concatenate([u0, [s0]]), 1.0, settings_mu(settings),
                              1e-12, settings_newton_tol(settings), settings_max_steps(settings), stop)
    if not stop(z):
        raise NoStrictInterior(f"no strictly feasible point (best max violation {P.cons_values(z[:n]).max():.3g})")
    return z[:n], steps


def settings_mu(s):
    return getattr(s, "barrier_mu", 20.0)


def settings_newton_tol(s):
    return getattr(s, "newton_tolerance", 1e-10)


def settings_max_steps(s):
    return getattr(s, "newton_max_steps", 200)


def _polish(P: _Scaled, u, t, c, J, lam):
    """One more Newton step with primal-dual multipliers.

    The central-path estimate -1/(t c) is only first-order accurate when some
    slack is tiny; linearising the multipliers along the final Newton step makes
    the stationarity residual second order. Kept only if the step stays interior.
    """
    inv = -1.0 / c
    H = t * P.f_hess(u) + J.T @ sp.diags(inv ** 2) @ J + P.cons_hess(u, inv)
    try:
        du, _ = _solve_kkt(H, P.A, -(t * P.f(u)[1] + J.T @ inv))
    except NumericalBreakdown:
        return u, c, J, lam
    un = u + du
    cn, Jn = P.cons(un)
    if not np.all(cn < 0) or not np.all(np.isfinite(P.f(un)[1])):
        return u, c, J, lam
    return un, cn, Jn, np.maximum(lam * (1.0 + (J @ du) * inv), 0.0)


def solve_convex(prog: SmoothConvexProgram, settings=None) -> ConvexResult:
    """Minimise ``prog`` by the barrier method; see module docstring."""
    P = _Scaled(prog)
    u0 = np.asarray(prog.x0, float) / P.s
    phase_one = False
    c0 = P.cons_values(u0)
    if c0.size and not np.all(c0 < 0):
        u0, _ = _phase_one(P, u0, settings)
        phase_one = True
        P = _Scaled(SmoothConvexProgram(**{**prog.__dict__, "x0": P.x(u0)}))
    m = c0.size
    gap_tol = getattr(settings, "barrier_tolerance", 1e-9)
    t0 = getattr(settings, "barrier_t0", 1.0) * max(m, 1)
    u, t, steps, history = _barrier(P, u0, t0, settings_mu(settings), gap_tol,
                                    settings_newton_tol(settings), settings_max_steps(settings))
    c, J = P.cons(u)
    lam = -1.0 / (t * c) if m else np.zeros(0)
    if m:
        u, c, J, lam = _polish(P, u, t, c, J, lam)
    g = P.f(u)[1]
    r = g + J.T @ lam
    if P.A.shape[0]:
        nu = np.linalg.lstsq(P.A.T, -r, rcond=None)[0]
        r = r + P.A.T @ nu
    x = P.x(u)
    return ConvexResult(x=x, objective=float(prog.objective(x)[0]),
                        kkt_residual=float(np.abs(r).max(initial=0.0)),
                        duality_gap=m / t if m else 0.0, multipliers=lam,
                        outer_objectives=history, newton_steps=steps, phase_one=phase_one)


def check_gradients(prog: SmoothConvexProgram, points, h_rel=1e-6):
    """Largest relative error between analytic and central-difference gradients.

    Covers the objective and every constraint row at each point. The step for
    coordinate j is ``h_rel * x_scale[j]``. Errors are measured against the
    gradient's infinity norm so tiny entries do not dominate.
    """
    scale = np.ones(prog.n) if prog.x_scale is None else np.asarray(prog.x_scale, float)
    worst = 0.0

    def rel(a, b):
        den = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-300)
        return float(np.abs(a - b).max(initial=0.0) / den)

    for x in points:
        x = np.asarray(x, float)
        num_f = np.zeros(prog.n)
        for j in range(prog.n):
            e = np.zeros(prog.n)
            e[j] = h_rel * scale[j]
            num_f[j] = (prog.objective(x + e)[0] - prog.objective(x - e)[0]) / (2 * e[j])
        worst = max(worst, rel(np.asarray(prog.objective(x)[1], float) * scale, num_f * scale))
        for blk in prog.constraints:
            c, J = blk.fn(x)
            J = _to_dense(J, (np.size(c), prog.n))
            num = np.zeros_like(J)
            for j in range(prog.n):
                e = np.zeros(prog.n)
                e[j] = h_rel * scale[j]
                num[:, j] = (np.asarray(blk.fn(x + e)[0]) - np.asarray(blk.fn(x - e)[0])) / (2 * e[j])
            for i in range(J.shape[0]):
                worst = max(worst, rel(J[i] * scale, num[i] * scale))
    return worst
