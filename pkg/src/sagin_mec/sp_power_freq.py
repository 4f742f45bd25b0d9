"""Joint computing-frequency and transmit-power control.

Transmit energy p w D / R is not convex in p. With
xi = 1 / ln(1 + p h / sigma^2) the rate becomes B / (xi ln 2) and the energy

    ln2 sigma^2 w D / (h B) * xi (e^{1/xi} - 1),

which is convex in xi. An epigraph variable Gamma >= xi (e^{1/xi} - 1) keeps the
objective linear in the transmit part. The power cap becomes a lower bound on xi.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InfeasibleBudget
from .model import Decision, channel_gains
from .optim.barrier import ConstraintBlock, SmoothConvexProgram, solve_convex
from .scenario import Scenario, SolverSettings
from .sp_offload import budget_rhs

LN2 = np.log(2.0)


def g(xi):
    """xi (e^{1/xi} - 1); convex and decreasing on xi > 0."""
    xi = np.asarray(xi, dtype=float)
    with np.errstate(over="ignore"):
        return xi * np.expm1(1.0 / xi)


def g1(xi):
    xi = np.asarray(xi, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(1.0 / xi)
        return np.expm1(1.0 / xi) - e / xi


def g2(xi):
    xi = np.asarray(xi, dtype=float)
    with np.errstate(over="ignore"):
        return np.exp(1.0 / xi) / xi ** 3


def xi_from_power(power, gain, noise):
    """xi = 1 / ln(1 + p h / sigma^2); infinite for p = 0."""
    snr = np.asarray(power, float) * gain / noise
    with np.errstate(divide="ignore"):
        return 1.0 / np.log1p(snr)


def xi_lower_bound(max_power, gain, noise):
    """Smallest xi allowed by the power cap."""
    return xi_from_power(max_power, gain, noise)


def power_from_xi(xi, gain, noise):
    """p = (sigma^2 / h) (e^{1/xi} - 1)."""
    with np.errstate(over="ignore"):
        return noise / np.asarray(gain, float) * np.expm1(1.0 / np.asarray(xi, float))


@dataclass
class PowerFreqAux:
    xi_uav: np.ndarray      # (M, N), nan where the UAV path is unused
    gamma_uav: np.ndarray
    xi_leo: np.ndarray      # (M, N), nan where the LEO path is unused
    gamma_leo: np.ndarray
    kkt_residual: float = 0.0


def recover_powers(s: Scenario, d: Decision, aux: PowerFreqAux):
    """Physical powers from xi; (M, K, N) UAV powers on associated links and (M, N) LEO powers."""
    h = channel_gains(s, d.trajectories)
    h_assoc = (d.assoc * h).sum(axis=1)
    with np.errstate(invalid="ignore"):
        pu = np.where(np.isfinite(aux.xi_uav), power_from_xi(aux.xi_uav, h_assoc, s.uav_noise_power), 0.0)
        ps = np.where(np.isfinite(aux.xi_leo),
                      power_from_xi(aux.xi_leo, s.leo_gain[:, None], s.leo_noise_power), 0.0)
    pu = np.minimum(pu, s.max_power_uav_link)
    ps = np.minimum(ps, s.max_power_leo_link)
    return d.assoc * pu[:, None, :], ps


class _Layout:
    def __init__(self):
        self.n = 0

    def take(self, count):
        idx = np.arange(self.n, self.n + count)
        self.n += count
        return idx


def _linear(name, G, rhs):
    G = sp.csr_matrix(G)
    rhs = np.asarray(rhs, float)
    return ConstraintBlock(name, lambda x: (G @ x - rhs, G), values=lambda x: G @ x - rhs)


class PowerFreqProblem:
    """The convex program over (f, xi, Gamma) for fixed trajectories, association and shares."""

    def __init__(self, s: Scenario, d: Decision, y, settings: SolverSettings):
        self.s, self.d = s, d
        M, K, N = s.num_mus, s.num_uavs, s.num_slots
        tau = s.slot_duration
        D, phi = s.task_bits, s.cycles_per_bit
        w = np.asarray(d.offload, float)
        y2 = np.asarray(y, float) ** 2
        assoc = np.asarray(d.assoc)
        self.k_of = np.argmax(assoc, axis=1)                               # (M, N)
        h = channel_gains(s, d.trajectories)
        self.h = np.take_along_axis(h, self.k_of[:, None, :], axis=1)[:, 0, :]
        bw_u = s.uav_bandwidth[np.arange(M)[:, None], self.k_of]          # (M, N)

        self.cl = np.argwhere(w[..., 0] > 0)
        self.cu = np.argwhere(w[..., 1] > 0)
        self.cs = np.argwhere(w[..., 2] > 0)
        lay = _Layout()
        self.iL = lay.take(len(self.cl))
        self.iU, self.iXU, self.iGU = lay.take(len(self.cu)), lay.take(len(self.cu)), lay.take(len(self.cu))
        self.iS, self.iXS, self.iGS = lay.take(len(self.cs)), lay.take(len(self.cs)), lay.take(len(self.cs))
        n = self.n = lay.n

        def at(cells, arr):
            return arr[cells[:, 0], cells[:, 1]] if len(cells) else np.zeros(0)

        cyc = D * phi
        # Objective coefficients: y^2 kappa w D phi f^2 and y^2 c_tx Gamma.
        self.q = np.zeros(n)
        self.q[self.iL] = at(self.cl, y2 * s.mu_energy_coeff * w[..., 0] * cyc)
        self.q[self.iU] = at(self.cu, y2 * s.uav_energy_coeff * w[..., 1] * cyc)
        self.q[self.iS] = at(self.cs, y2 * s.leo_energy_coeff * w[..., 2] * cyc)
        self.lin = np.zeros(n)
        self.lin[self.iGU] = at(self.cu, y2 * LN2 * s.uav_noise_power * w[..., 1] * D / (self.h * bw_u))
        self.lin[self.iGS] = at(self.cs, y2 * LN2 * s.leo_noise_power * w[..., 2] * D
                                / (s.leo_gain[:, None] * s.leo_bandwidth))

        blocks = []
        nL, nU, nS = len(self.cl), len(self.cu), len(self.cs)
        if nL:
            I = sp.csr_matrix((np.ones(nL), (np.arange(nL), self.iL)), shape=(nL, n))
            blocks.append(_linear("local_latency", -I, -at(self.cl, w[..., 0] * cyc / tau)))
            blocks.append(_linear("local_cap", I, np.full(nL, s.mu_max_freq)))
        xi_min_u = at(self.cu, xi_lower_bound(s.max_power_uav_link, self.h, s.uav_noise_power))
        xi_min_s = at(self.cs, xi_lower_bound(s.max_power_leo_link, s.leo_gain[:, None] * np.ones((M, N)),
                                              s.leo_noise_power))
        self.xi_min_u, self.xi_min_s = xi_min_u, xi_min_s
        for tag, iF, iX, iG, cells, xi_min, a_lat, b_lat in (
                ("uav", self.iU, self.iXU, self.iGU, self.cu, xi_min_u,
                 at(self.cu, w[..., 1] * D * LN2 / bw_u), at(self.cu, w[..., 1] * cyc)),
                ("leo", self.iS, self.iXS, self.iGS, self.cs, xi_min_s,
                 at(self.cs, w[..., 2] * D * LN2 / s.leo_bandwidth), at(self.cs, w[..., 2] * cyc))):
            m = len(cells)
            if not m:
                continue
            r = np.arange(m)
            blocks.append(_linear(f"{tag}_freq_pos", sp.csr_matrix((-np.ones(m), (r, iF)), shape=(m, n)),
                                  np.zeros(m)))
            blocks.append(_linear(f"{tag}_xi_min", sp.csr_matrix((-np.ones(m), (r, iX)), shape=(m, n)), -xi_min))
            blocks.append(self._gamma_block(f"{tag}_gamma", iX, iG))
            blocks.append(self._latency_block(f"{tag}_latency", iF, iX, a_lat, b_lat, tau))
        if nU:
            rows = self.k_of[self.cu[:, 0], self.cu[:, 1]] * N + self.cu[:, 1]
            G = sp.csr_matrix((np.ones(nU), (rows, self.iU)), shape=(K * N, n))
            G = G[np.flatnonzero(np.diff(G.indptr) > 0)]
            blocks.append(_linear("uav_cap", G, np.full(G.shape[0], s.uav_max_freq)))
            kk = self.k_of[self.cu[:, 0], self.cu[:, 1]]
            rhs = budget_rhs(s, d, settings.min_speed_floor)
            used = np.unique(kk)
            if np.any(rhs[used] <= 0):
                k = int(used[np.argmax(rhs[used] <= 0)])
                raise InfeasibleBudget(f"UAV {k} has no energy left for computing after flight")
            coef = at(self.cu, s.uav_energy_coeff * w[..., 1] * cyc)
            blocks.append(self._budget_block(kk, coef, rhs, K))
        if nS:
            G = sp.csr_matrix((np.ones(nS), (self.cs[:, 1], self.iS)), shape=(N, n))
            G = G[np.flatnonzero(np.diff(G.indptr) > 0)]
            blocks.append(_linear("leo_cap", G, np.full(G.shape[0], s.leo_max_freq)))

        x0, scale = self._start(at)
        self.program = SmoothConvexProgram(n=n, objective=self._objective,
                                           objective_hess=lambda x: 2 * self.q,
                                           constraints=blocks, x0=x0, x_scale=scale)

    # -- evaluators --------------------------------------------------------
    def _objective(self, x):
        return float(self.q @ x ** 2 + self.lin @ x), 2 * self.q * x + self.lin

    def _gamma_block(self, name, iX, iG):
        n, m = self.n, len(iX)
        r = np.arange(m)

        def values(x):
            xi = x[iX]
            return np.where(xi > 0, g(np.where(xi > 0, xi, 1.0)), np.inf) - x[iG]

        def fn(x):
            xi = x[iX]
            vals = values(x)
            J = sp.csr_matrix((np.concatenate([g1(np.where(xi > 0, xi, 1.0)), -np.ones(m)]),
                               (np.concatenate([r, r]), np.concatenate([iX, iG]))), shape=(m, n))
            return vals, J

        def hess(x, wts):
            d2 = np.zeros(n)
            d2[iX] = wts * g2(x[iX])
            return d2

        return ConstraintBlock(name, fn, hess, values)

    def _latency_block(self, name, iF, iX, a, b, tau):
        """a xi + b / f - tau <= 0."""
        n, m = self.n, len(iF)
        r = np.arange(m)

        def values(x):
            f = x[iF]
            ok = f > 0
            return np.where(ok, a * x[iX] + b / np.where(ok, f, 1.0) - tau, np.inf)

        def fn(x):
            fs = np.where(x[iF] > 0, x[iF], 1.0)
            vals = values(x)
            J = sp.csr_matrix((np.concatenate([a, -b / fs ** 2]),
                               (np.concatenate([r, r]), np.concatenate([iX, iF]))), shape=(m, n))
            return vals, J

        def hess(x, wts):
            d2 = np.zeros(n)
            d2[iF] = wts * 2 * b / x[iF] ** 3
            return d2

        return ConstraintBlock(name, fn, hess, values)

    def _budget_block(self, kk, coef, rhs, K):
        n = self.n
        G = sp.csr_matrix((coef, (kk, self.iU)), shape=(K, n))
        keep = np.flatnonzero(np.diff(G.indptr) > 0)
        G = G[keep]
        rhs = rhs[keep]

        def fn(x):
            return G @ x ** 2 - rhs, G @ sp.diags(2 * x)

        def hess(x, wts):
            return 2 * (G.T @ wts)

        return ConstraintBlock("uav_budget", fn, hess, lambda x: G @ x ** 2 - rhs)

    def _start(self, at):
        """Current frequencies and powers mapped to (f, xi, Gamma); Gamma 10 % above its row."""
        s, d = self.s, self.d
        x = np.zeros(self.n)
        x[self.iL] = at(self.cl, d.freq_local)
        f_u = np.take_along_axis(d.freq_uav, self.k_of[:, None, :], axis=1)[:, 0, :]
        p_u = np.take_along_axis(d.power_uav, self.k_of[:, None, :], axis=1)[:, 0, :]
        x[self.iU] = at(self.cu, f_u)
        x[self.iS] = at(self.cs, d.freq_leo)
        xi_u = at(self.cu, xi_from_power(p_u, self.h, s.uav_noise_power))
        xi_s = at(self.cs, xi_from_power(d.power_leo, s.leo_gain[:, None], s.leo_noise_power))
        x[self.iXU] = np.maximum(xi_u, self.xi_min_u * (1 + 1e-6))
        x[self.iXS] = np.maximum(xi_s, self.xi_min_s * (1 + 1e-6))
        x[self.iGU] = 1.1 * g(x[self.iXU])
        x[self.iGS] = 1.1 * g(x[self.iXS])
        scale = np.ones(self.n)
        scale[self.iL] = s.mu_max_freq
        scale[self.iU] = s.uav_max_freq
        scale[self.iS] = s.leo_max_freq
        for idx in (self.iXU, self.iGU, self.iXS, self.iGS):
            scale[idx] = np.maximum(np.abs(x[idx]), 1e-12)
        return x, scale

    # -- results -------------------------------------------------------------
    def aux(self, x, kkt=0.0) -> PowerFreqAux:
        M, N = self.s.num_mus, self.s.num_slots
        out = [np.full((M, N), np.nan) for _ in range(4)]
        for arr, cells, idx in ((out[0], self.cu, self.iXU), (out[1], self.cu, self.iGU),
                                (out[2], self.cs, self.iXS), (out[3], self.cs, self.iGS)):
            if len(cells):
                arr[cells[:, 0], cells[:, 1]] = x[idx]
        # Gamma only enters the objective, with a positive weight, so its row is tight
        # at the optimum; remove the slack the barrier leaves behind.
        for xi, gam in ((out[0], out[1]), (out[2], out[3])):
            used = np.isfinite(xi)
            gam[used] = g(xi[used])
        return PowerFreqAux(*out, kkt_residual=kkt)

    def decision(self, x, aux: PowerFreqAux) -> Decision:
        s, d = self.s, self.d
        M, N = s.num_mus, s.num_slots
        fl = np.zeros((M, N))
        fu = np.zeros((M, N))
        fs = np.zeros((M, N))
        for arr, cells, idx in ((fl, self.cl, self.iL), (fu, self.cu, self.iU), (fs, self.cs, self.iS)):
            if len(cells):
                arr[cells[:, 0], cells[:, 1]] = x[idx]
        pu, ps = recover_powers(s, d, aux)
        return d.copy(freq_local=np.clip(fl, 0, s.mu_max_freq), freq_uav=d.assoc * fu[:, None, :],
                      freq_leo=fs, power_uav=pu, power_leo=ps)


def solve_power_freq(s: Scenario, d: Decision, y, settings: SolverSettings | None = None):
    """Optimise frequencies and powers with everything else fixed; returns (Decision, aux)."""
    settings = settings or SolverSettings()
    prob = PowerFreqProblem(s, d, y, settings)
    if prob.n == 0:
        return d, prob.aux(np.zeros(0))
    res = solve_convex(prob.program, settings)
    aux = prob.aux(res.x, res.kkt_residual)
    return prob.decision(res.x, aux), aux
