"""Offloading fractions: how each task splits across local, UAV and LEO processing.

Two forms are available.

``lp``: frequencies and powers stay fixed, so the weighted energy is linear in
the shares. Each path gets a latency cap and the UAV budget couples the UAV
shares; the LP is solved by simplex.

``joint``: each share is optimised together with the smallest frequency that
meets the slot latency, f = w D phi / (tau - w D / R). Substituting it leaves a
separable convex program in the shares alone, solved by the barrier method.
This avoids the lock-in where frequencies fitted to the current shares make
every other split look infeasible.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import InfeasibleOffload
from .model import Decision, link_rates, propulsion
from .optim.barrier import ConstraintBlock, SmoothConvexProgram, solve_convex
from .optim.lp import LinearProgram, solve_lp
from .scenario import Scenario, SolverSettings

ALL_PATHS = (True, True, True)


def _assoc_pick(a, x):
    """Value on the associated link, (M, K, N) -> (M, N)."""
    return (np.asarray(a, float) * x).sum(axis=1)


def path_coefficients(s: Scenario, d: Decision):
    """Per-(m, n) weighted-energy coefficients W2, W3, W4 and the latency caps."""
    _, r_uav, r_leo = link_rates(s, d)
    a = d.assoc
    D, phi, tau = s.task_bits, s.cycles_per_bit, s.slot_duration
    r_u, p_u, f_u = _assoc_pick(a, r_uav), _assoc_pick(a, d.power_uav), _assoc_pick(a, d.freq_uav)
    with np.errstate(divide="ignore", invalid="ignore"):
        w2 = s.mu_energy_coeff * d.freq_local ** 2 * D * phi
        w3 = np.where(r_u > 0, p_u * D / r_u, np.inf) + s.uav_energy_coeff * f_u ** 2 * D * phi
        w4 = np.where(r_leo > 0, d.power_leo * D / r_leo, np.inf) + s.leo_energy_coeff * d.freq_leo ** 2 * D * phi
        cap_l = np.where(d.freq_local > 0, tau * d.freq_local / (D * phi), 0.0)
        cap_u = np.where((r_u > 0) & (f_u > 0), tau / (D / r_u + D * phi / f_u), 0.0)
        cap_s = np.where((r_leo > 0) & (d.freq_leo > 0), tau / (D / r_leo + D * phi / d.freq_leo), 0.0)
    W = np.stack([w2, w3, w4], axis=-1)
    caps = np.clip(np.stack([cap_l, cap_u, cap_s], axis=-1), 0.0, 1.0)
    W = np.where(caps > 0, W, 0.0)
    return W, caps


def budget_rhs(s: Scenario, d: Decision, floor: float) -> np.ndarray:
    _, e_prop = propulsion(s, d, floor)
    return s.uav_energy_budget - e_prop.sum(axis=1)


def solve_offload_lp(s: Scenario, d: Decision, y, settings: SolverSettings | None = None,
                     paths=ALL_PATHS) -> Decision:
    settings = settings or SolverSettings()
    M, N = s.num_mus, s.num_slots
    W, caps = path_coefficients(s, d)
    caps = caps * np.asarray(paths, float)
    if np.any(caps.sum(axis=-1) < 1 - 1e-12):
        m, n = np.argwhere(caps.sum(axis=-1) < 1 - 1e-12)[0]
        raise InfeasibleOffload(f"latency caps of task ({m}, {n}) sum to {caps[m, n].sum():.6g} < 1")
    y2 = np.asarray(y, float) ** 2
    c = (y2[..., None] * W).ravel()
    nv = M * N * 3
    A_eq = np.zeros((M * N, nv))
    for i in range(M * N):
        A_eq[i, 3 * i:3 * i + 3] = 1.0
    # UAV budget: sum alpha kappa f^2 D phi w_U <= E_max - propulsion.
    e_cmp = s.uav_energy_coeff * d.freq_uav ** 2 * (s.task_bits * s.cycles_per_bit)[:, None, :] * d.assoc
    A_ub = np.zeros((s.num_uavs, nv))
    for k in range(s.num_uavs):
        A_ub[k, 1::3] = e_cmp[:, k, :].ravel()
    res = solve_lp(LinearProgram(c=c, A_ub=A_ub, b_ub=budget_rhs(s, d, settings.min_speed_floor),
                                 A_eq=A_eq, b_eq=np.ones(M * N), ub=caps.ravel()),
                   tol=settings.lp_tolerance)
    omega = np.clip(res.x.reshape(M, N, 3), 0.0, 1.0)
    omega /= omega.sum(axis=-1, keepdims=True)
    return d.copy(offload=omega)


# ---------------------------------------------------------------- joint form

def _tight(u, a, c, tau):
    """Latency-tight frequency f(u) = c u / (tau - a u) and g(u) = u^3 / (tau - a u)^2.

    Returns values, first and second derivatives of both; inf outside the domain.
    """
    t = tau - a * u
    bad = t <= 0
    t = np.where(bad, 1.0, t)
    f = c * u / t
    f1 = c * tau / t ** 2
    f2 = 2 * c * tau * a / t ** 3
    g = u ** 3 / t ** 2
    g1 = 3 * u ** 2 / t ** 2 + 2 * a * u ** 3 / t ** 3
    g2 = 6 * u / t ** 2 + 12 * a * u ** 2 / t ** 3 + 6 * a ** 2 * u ** 3 / t ** 4
    f = np.where(bad, np.inf, f)
    g = np.where(bad, np.inf, g)
    return f, f1, f2, g, g1, g2


def _separable_block(name, G, rhs, h):
    """Rows G @ h(u) - rhs <= 0 for a separable h returning (value, d1, d2)."""
    G = sp.csr_matrix(G)

    def fn(u):
        v, d1, _ = h(u)
        if not np.all(np.isfinite(v[G.indices])):
            return np.full(G.shape[0], np.inf), G
        return G @ np.where(np.isfinite(v), v, 0.0) - rhs, G @ sp.diags(d1)

    def values(u):
        v = h(u)[0]
        if not np.all(np.isfinite(v[G.indices])):
            return np.full(G.shape[0], np.inf)
        return G @ np.where(np.isfinite(v), v, 0.0) - rhs

    def hess(u, w):
        return (G.T @ w) * h(u)[2]

    return ConstraintBlock(name, fn, hess, values)


class JointOffloadProblem:
    """Shares with latency-tight frequencies over the active (m, n, path) variables."""

    def __init__(self, s: Scenario, d: Decision, y, settings: SolverSettings, paths=ALL_PATHS):
        self.s, self.d = s, d
        M, N, K = s.num_mus, s.num_slots, s.num_uavs
        tau = s.slot_duration
        _, r_uav, r_leo = link_rates(s, d)
        r_u, p_u = _assoc_pick(d.assoc, r_uav), _assoc_pick(d.assoc, d.power_uav)
        D, phi = s.task_bits, s.cycles_per_bit
        with np.errstate(divide="ignore"):
            a = np.stack([np.zeros((M, N)), np.where(r_u > 0, D / r_u, np.inf),
                          np.where(r_leo > 0, D / r_leo, np.inf)], axis=-1)
        p = np.stack([np.zeros((M, N)), p_u, np.asarray(d.power_leo, float)], axis=-1)
        kappa = np.array([s.mu_energy_coeff, s.uav_energy_coeff, s.leo_energy_coeff])
        fmax = np.array([s.mu_max_freq, s.uav_max_freq, s.leo_max_freq])
        c = np.repeat((D * phi)[..., None], 3, axis=-1)
        active = np.isfinite(a) & np.asarray(paths, bool)[None, None, :]
        # Largest share a path can take alone: f(u) <= F_max.
        with np.errstate(divide="ignore", invalid="ignore"):
            single = np.where(active, tau * fmax / (c + np.where(active, a, 0.0) * fmax), 0.0)
        self.single_cap = np.minimum(single, 1.0)
        if np.any(self.single_cap.sum(axis=-1) < 1 - 1e-12):
            m, n = np.argwhere(self.single_cap.sum(axis=-1) < 1 - 1e-12)[0]
            raise InfeasibleOffload(f"no split of task ({m}, {n}) meets the slot latency")
        self.active = active
        self.idx = np.flatnonzero(active.ravel())
        self.a = np.where(active, a, 0.0).ravel()[self.idx]
        self.c = c.ravel()[self.idx]
        self.p = p.ravel()[self.idx]
        self.kappa = np.broadcast_to(kappa, (M, N, 3)).ravel()[self.idx]
        self.path = np.broadcast_to(np.arange(3), (M, N, 3)).ravel()[self.idx]
        self.y2 = np.repeat(np.asarray(y, float) ** 2, 3).reshape(M, N, 3).ravel()[self.idx]
        self.tau = tau
        self.cell = (np.arange(M * N * 3) // 3)[self.idx]
        self.n = self.idx.size
        cell_of = np.unravel_index(self.cell, (M, N))
        self.m_of, self.n_of = cell_of
        k_of = np.argmax(np.asarray(d.assoc)[self.m_of, :, self.n_of], axis=1)
        self.k_of = k_of

        nv = self.n
        blocks = [ConstraintBlock("nonneg", lambda u: (-u, -sp.eye(nv, format="csr")), values=lambda u: -u)]
        # Per-variable frequency caps for local (linear) and group caps for UAV/LEO.
        loc = np.flatnonzero(self.path == 0)
        if loc.size:
            G = sp.csr_matrix((np.ones(loc.size), (np.arange(loc.size), loc)), shape=(loc.size, nv))
            blocks.append(_separable_block("local_freq", G, np.full(loc.size, s.mu_max_freq), self._freq))
        uav = np.flatnonzero(self.path == 1)
        if uav.size:
            rows = self.k_of[uav] * N + self.n_of[uav]
            G = sp.csr_matrix((np.ones(uav.size), (rows, uav)), shape=(K * N, nv))
            keep = np.flatnonzero(np.diff(G.indptr) > 0)
            blocks.append(_separable_block("uav_freq", G[keep], np.full(keep.size, s.uav_max_freq), self._freq))
            Gb = sp.csr_matrix((self.kappa[uav] * self.c[uav] ** 3, (self.k_of[uav], uav)), shape=(K, nv))
            keepb = np.flatnonzero(np.diff(Gb.indptr) > 0)
            rhs = budget_rhs(s, d, settings.min_speed_floor)[keepb]
            blocks.append(_separable_block("uav_budget", Gb[keepb], rhs, self._cube))
        leo = np.flatnonzero(self.path == 2)
        if leo.size:
            G = sp.csr_matrix((np.ones(leo.size), (self.n_of[leo], leo)), shape=(N, nv))
            keep = np.flatnonzero(np.diff(G.indptr) > 0)
            blocks.append(_separable_block("leo_freq", G[keep], np.full(keep.size, s.leo_max_freq), self._freq))
        A = sp.csr_matrix((np.ones(nv), (self.cell, np.arange(nv))), shape=(M * N, nv))
        A = A[np.flatnonzero(np.diff(A.indptr) > 0)].toarray()
        self.program = SmoothConvexProgram(
            n=nv, objective=self._objective, objective_hess=self._objective_hess,
            constraints=blocks, x0=self._start(), A_eq=A, b_eq=np.ones(A.shape[0]))

    def _freq(self, u):
        f, f1, f2, *_ = _tight(u, self.a, self.c, self.tau)
        return f, f1, f2

    def _cube(self, u):
        _, _, _, g, g1, g2 = _tight(u, self.a, self.c, self.tau)
        return g, g1, g2

    def energy(self, u):
        """Per-variable energy p a u + kappa c^3 g(u) with its derivatives."""
        g, g1, g2 = self._cube(u)
        k3 = self.kappa * self.c ** 3
        return self.p * self.a * u + k3 * g, self.p * self.a + k3 * g1, k3 * g2

    def _objective(self, u):
        e, e1, _ = self.energy(u)
        if not np.all(np.isfinite(e)):
            return np.inf, np.zeros_like(u)
        return float(self.y2 @ e), self.y2 * e1

    def _objective_hess(self, u):
        return self.y2 * self.energy(u)[2]

    def _start(self):
        """Current shares pulled slightly toward an even split of each cell's paths."""
        w = np.asarray(self.d.offload, float).ravel()[self.idx]
        cnt = np.bincount(self.cell, minlength=self.cell.max() + 1)[self.cell]
        even = np.minimum(1.0 / cnt, 0.5 * self.single_cap.ravel()[self.idx])
        for eps in (1e-2, 1e-3, 1e-4, 1e-6):
            u = (1 - eps) * w + eps * even
            tot = np.bincount(self.cell, weights=u)[self.cell]
            u = u / tot
            if np.all(np.isfinite(self._freq(u)[0])):
                return u
        return w

    def decision(self, u) -> Decision:
        s, d = self.s, self.d
        M, N = s.num_mus, s.num_slots
        w = np.zeros(M * N * 3)
        w[self.idx] = np.maximum(u, 0.0)
        w = w.reshape(M, N, 3)
        w /= w.sum(axis=-1, keepdims=True)
        f = np.zeros(M * N * 3)
        f[self.idx] = self._freq(w.ravel()[self.idx])[0]
        f = f.reshape(M, N, 3)
        freq_uav = np.asarray(d.assoc, float) * f[:, None, :, 1]
        return d.copy(offload=w, freq_local=np.minimum(f[..., 0], s.mu_max_freq),
                      freq_uav=freq_uav, freq_leo=f[..., 2])


def solve_offload_joint(s: Scenario, d: Decision, y, settings: SolverSettings | None = None,
                        paths=ALL_PATHS) -> Decision:
    settings = settings or SolverSettings()
    prob = JointOffloadProblem(s, d, y, settings, paths)
    if prob.n == 0:
        return d
    res = solve_convex(prob.program, settings)
    return prob.decision(res.x)


def solve_offload(s: Scenario, d: Decision, y, settings: SolverSettings | None = None,
                  paths=ALL_PATHS) -> Decision:
    """Update the offloading shares (and, in joint mode, the matching frequencies)."""
    settings = settings or SolverSettings()
    if settings.offload_mode == "lp":
        return solve_offload_lp(s, d, y, settings, paths)
    return solve_offload_joint(s, d, y, settings, paths)
