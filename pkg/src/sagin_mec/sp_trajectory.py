"""UAV trajectories by successive convex approximation.

At an expansion point q^l the non-convex pieces are replaced as follows:

* flight energy uses a slack speed psi with tau^2 psi^2 <= a tangent of ||dq||^2,
  so tau (c1 ||v||^3 + c2 / psi) is convex and bounds the true energy from above;
* separation ||q_k - q_i||^2 >= d_min^2 is replaced by its tangent (an under-estimate);
* each served link gets a rate proxy gamma and a squared distance S. The rate
  B log2(1 + p beta0 / (S sigma^2)) is bounded below by keeping log2(S sigma^2 + p beta0)
  and linearising -log2(S) at S^l.

The distance row ties S to the trajectory. ``conservative`` uses S >= H^2 + ||q - s||^2,
which is convex as written and keeps gamma a true lower bound of the rate.
``tangent`` uses the tangent form S <= H^2 + ||q^l - s||^2 + 2 (q^l - s).(q - q^l);
it leaves S free to shrink, so only the acceptance test below keeps it safe.

Every candidate is re-evaluated with exact rates and accepted only when it is
feasible and does not increase the weighted UAV energy; otherwise the step is
halved toward q^l.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ExpansionInfeasible
from .model import Decision, check_feasibility, energies, link_rates
from .optim.barrier import ConstraintBlock, SmoothConvexProgram, solve_convex
from .scenario import Scenario, SolverSettings

LOG2E = 1.0 / np.log(2.0)


def _coo(rows, cols, vals, shape):
    rows, cols, vals = (np.asarray(a).ravel() for a in (rows, cols, vals))
    keep = cols >= 0
    return sp.csr_matrix((vals[keep].astype(float), (rows[keep], cols[keep])), shape=shape)


def rate_lower_bound(S, S_l, power, bandwidth, beta0, noise):
    """Concave lower bound of B log2(1 + p beta0 / (S sigma^2)), tight at S = S_l."""
    return bandwidth * (np.log2(S * noise + power * beta0) - np.log2(S_l * noise)
                        - LOG2E * (S - S_l) / S_l)


def propulsion_upper(dq, psi, s: Scenario):
    """tau (c1 ||v||^3 + c2 / psi) for displacement dq over one slot."""
    v = np.linalg.norm(dq, axis=-1) / s.slot_duration
    return s.slot_duration * (s.propulsion_c1 * v ** 3 + s.propulsion_c2 / psi)


@dataclass
class TrajectoryAux:
    psi: np.ndarray          # (K, N-1)
    gamma: np.ndarray        # (P,) per served link
    S: np.ndarray            # (P,)
    links: np.ndarray        # (P, 3) rows of (m, k, n)
    q_l: np.ndarray          # expansion trajectory
    S_l: np.ndarray


@dataclass
class ScaStep:
    iteration: int
    tran_before: float
    tran_after: float
    total_before: float
    total_after: float
    accepted: bool
    blend: float


@dataclass
class ScaReport:
    steps: list = field(default_factory=list)
    iterations: int = 0
    aux: TrajectoryAux | None = None


class ConvexifiedTrajectory:
    """The convex program built at an expansion point."""

    def __init__(self, s: Scenario, d: Decision, y, settings: SolverSettings, joint: bool | None = None):
        self.s, self.d = s, d
        self.settings = settings
        self.joint = settings.offload_mode == "joint" if joint is None else joint
        self.tangent = settings.distance_row == "tangent"
        K, N = s.num_uavs, s.num_slots
        tau = s.slot_duration
        q_l = np.asarray(d.trajectories, float)
        self.q_l = q_l

        w_u = np.asarray(d.offload)[..., 1]
        links = np.argwhere((np.asarray(d.assoc) == 1) & (w_u[:, None, :] > 0))    # (m, k, n)
        self.links = links

        # Variable layout: interior waypoints, psi, gamma, S. A UAV serving no
        # offloaded bits has no say in the objective, so its path stays put.
        self.moving = np.isin(np.arange(K), links[:, 1])
        qidx = np.full((K, N, 2), -1)
        nq = int(self.moving.sum()) * max(N - 2, 0) * 2
        if N > 2:
            qidx[self.moving, 1:N - 1, :] = np.arange(nq).reshape(-1, N - 2, 2)
        self.qidx = qidx
        self.qfree = qidx >= 0
        npsi = K * (N - 1)
        self.ipsi = nq + np.arange(npsi).reshape(K, N - 1) if npsi else np.zeros((K, 0), int)
        P = len(links)
        self.igam = nq + npsi + np.arange(P)
        self.iS = nq + npsi + P + np.arange(P)
        self.n = n = nq + npsi + 2 * P
        lm, lk, ln = links.T if P else (np.zeros(0, int),) * 3

        D, phi = s.task_bits, s.cycles_per_bit
        y2 = np.asarray(y, float) ** 2
        self.a = w_u[lm, ln] * D[lm, ln]                      # bits on the link
        self.c = self.a * phi[lm, ln]                         # cycles on the link
        self.p = np.asarray(d.power_uav)[lm, lk, ln]
        self.f = np.asarray(d.freq_uav)[lm, lk, ln]
        self.bw = s.uav_bandwidth[lm, lk]
        self.y2 = y2[lm, ln]
        self.lm, self.lk, self.ln = lm, lk, ln
        self.S_l = s.uav_altitude ** 2 + np.sum((q_l[lk, ln] - s.mu_positions[lm]) ** 2, axis=-1)
        self.tau = tau
        e_uc = energies(s, d)[2]
        self.fixed_compute = e_uc.sum(axis=(0, 2))             # (K,) used when frequencies stay fixed

        blocks = [self._speed_block(), self._psi_block(), self._budget_block(), *self._separation_blocks()]
        if P:
            blocks += [self._positive_block("gamma_pos", self.igam), self._distance_block(), self._rate_block()]
            if self.tangent:
                blocks.append(self._positive_block("S_pos", self.iS))
            blocks += self._latency_blocks()
        blocks = [b for b in blocks if b is not None]
        x0, scale = self._start()
        self.program = SmoothConvexProgram(n=n, objective=self._objective, objective_hess=self._objective_hess,
                                           constraints=blocks, x0=x0, x_scale=scale)

    # -- variable helpers ----------------------------------------------------
    def traj(self, x):
        q = self.q_l.copy()
        q[self.qfree] = x[self.qidx[self.qfree]]
        return q

    def _dq(self, x):
        q = self.traj(x)
        return np.diff(q, axis=1)                             # (K, N-1, 2)

    # -- link energy as a function of gamma ------------------------------------
    def _link_terms(self, gam):
        """Transmit energy p a / gamma and, in joint mode, the latency-tight compute energy."""
        u = 1.0 / gam
        e = self.p * self.a * u
        e1 = -self.p * self.a * u ** 2
        e2 = 2 * self.p * self.a * u ** 3
        if self.joint:
            T, T1, T2 = self._tight_cube(gam)
            k3 = self.s.uav_energy_coeff * self.c ** 3
            e, e1, e2 = e + k3 * T, e1 + k3 * T1, e2 + k3 * T2
        return e, e1, e2

    def _tight_cube(self, gam):
        """(tau - a/gamma)^-2 with derivatives in gamma; inf outside the domain."""
        u = 1.0 / gam
        r = self.tau - self.a * u
        bad = r <= 0
        r = np.where(bad, 1.0, r)
        rho, rho1, rho2 = r ** -2, 2 * self.a * r ** -3, 6 * self.a ** 2 * r ** -4
        u1, u2 = -u ** 2, 2 * u ** 3
        return np.where(bad, np.inf, rho), rho1 * u1, rho2 * u1 ** 2 + rho1 * u2

    def _tight_freq(self, gam):
        u = 1.0 / gam
        r = self.tau - self.a * u
        bad = r <= 0
        r = np.where(bad, 1.0, r)
        f, f1, f2 = self.c / r, self.c * self.a * r ** -2, 2 * self.c * self.a ** 2 * r ** -3
        u1, u2 = -u ** 2, 2 * u ** 3
        return np.where(bad, np.inf, f), f1 * u1, f2 * u1 ** 2 + f1 * u2

    def _objective(self, x):
        gam = x[self.igam]
        if np.any(gam <= 0):
            return np.inf, np.zeros(self.n)
        e, e1, _ = self._link_terms(gam)
        g = np.zeros(self.n)
        g[self.igam] = self.y2 * e1
        return float(self.y2 @ e), g

    def _objective_hess(self, x):
        h = np.zeros(self.n)
        h[self.igam] = self.y2 * self._link_terms(x[self.igam])[2]
        return h

    # -- constraint blocks -------------------------------------------------------
    def _speed_block(self):
        s, n = self.s, self.n
        N = s.num_slots
        if N < 2:
            return None
        i_hi, i_lo = self.qidx[:, 1:, :], self.qidx[:, :-1, :]
        sel = (i_hi[..., 0] >= 0) | (i_lo[..., 0] >= 0)          # segments with a free end
        m = int(sel.sum())
        if not m:
            return None
        i_hi, i_lo = i_hi[sel], i_lo[sel]
        rows = np.repeat(np.arange(m)[:, None], 2, axis=-1)
        lim = (s.max_uav_speed * s.slot_duration) ** 2

        def values(x):
            return np.sum(self._dq(x)[sel] ** 2, axis=-1) - lim

        def fn(x):
            dq = self._dq(x)[sel]
            J = _coo(np.concatenate([rows, rows]), np.concatenate([i_hi, i_lo]),
                     np.concatenate([2 * dq, -2 * dq]), (m, n))
            return values(x), J

        def hess(x, w):
            return _pair_hess(i_hi, i_lo, 2 * np.repeat(w[:, None], 2, axis=-1), n)

        return ConstraintBlock("speed", fn, hess, values)

    def _psi_block(self):
        """tau^2 psi^2 - (2 dq^l.dq - ||dq^l||^2) - (floor tau)^2 <= 0."""
        s, n = self.s, self.n
        K, N = s.num_uavs, s.num_slots
        if N < 2:
            return None
        m = K * (N - 1)
        dq_l = np.diff(self.q_l, axis=1)
        tau = s.slot_duration
        eps = (self.settings.min_speed_floor * tau) ** 2
        rows2 = np.repeat(np.arange(m).reshape(K, N - 1)[..., None], 2, axis=-1)
        i_hi, i_lo = self.qidx[:, 1:, :], self.qidx[:, :-1, :]
        ipsi = self.ipsi.ravel()
        Jq = _coo(np.concatenate([rows2, rows2]), np.concatenate([i_hi, i_lo]),
                  np.concatenate([-2 * dq_l, 2 * dq_l]), (m, n))

        def values(x):
            dq = self._dq(x)
            lin = np.sum(2 * dq_l * dq, axis=-1) - np.sum(dq_l ** 2, axis=-1)
            return tau ** 2 * x[ipsi] ** 2 - lin.ravel() - eps

        def fn(x):
            J = Jq + _coo(np.arange(m), ipsi, 2 * tau ** 2 * x[ipsi], (m, n))
            return values(x), J

        def hess(x, w):
            h = np.zeros(n)
            h[ipsi] = 2 * tau ** 2 * w
            return h

        return ConstraintBlock("psi", fn, hess, values)

    def _budget_block(self):
        """Per UAV: sum tau (c1 ||v||^3 + c2 / psi) + compute energy <= E_max."""
        s, n = self.s, self.n
        K, N = s.num_uavs, s.num_slots
        if N < 2 and not len(self.links):
            return None
        tau, c1, c2 = s.slot_duration, s.propulsion_c1, s.propulsion_c2
        i_hi, i_lo = self.qidx[:, 1:, :], self.qidx[:, :-1, :]
        rows2 = np.repeat(np.repeat(np.arange(K)[:, None], N - 1, axis=1)[..., None], 2, axis=-1)
        ipsi = self.ipsi
        k3 = s.uav_energy_coeff * self.c ** 3

        def compute(x):
            if not self.joint or not len(self.links):
                return self.fixed_compute.copy(), None, None
            T, T1, T2 = self._tight_cube(x[self.igam])
            return np.bincount(self.lk, weights=k3 * T, minlength=K), k3 * T1, k3 * T2

        def values(x):
            if np.any(x[ipsi] <= 0):        # c2 / psi is convex only for psi > 0
                return np.full(K, np.inf)
            dq = self._dq(x)
            prop = (c1 / tau ** 2 * np.linalg.norm(dq, axis=-1) ** 3 + tau * c2 / x[ipsi]).sum(axis=1)
            return prop + compute(x)[0] - s.uav_energy_budget

        def fn(x):
            dq = self._dq(x)
            nrm = np.linalg.norm(dq, axis=-1)[..., None]
            gq = 3 * c1 / tau ** 2 * nrm * dq
            J = _coo(np.concatenate([rows2, rows2]), np.concatenate([i_hi, i_lo]),
                     np.concatenate([gq, -gq]), (K, n))
            J = J + _coo(np.repeat(np.arange(K), N - 1), ipsi.ravel(), (-tau * c2 / x[ipsi] ** 2).ravel(), (K, n))
            _, d1, _ = compute(x)
            if d1 is not None:
                J = J + _coo(self.lk, self.igam, d1, (K, n))
            return values(x), J

        def hess(x, w):
            dq = self._dq(x)
            nrm = np.linalg.norm(dq, axis=-1)
            safe = np.where(nrm > 0, nrm, 1.0)
            # 3 c1 / tau^2 (||d|| I + d d^T / ||d||) per slot, weighted by its UAV row.
            wk = w[:, None] * 3 * c1 / tau ** 2
            blocks = wk[..., None, None] * (nrm[..., None, None] * np.eye(2)
                                            + np.where(nrm[..., None, None] > 0,
                                                       dq[..., :, None] * dq[..., None, :] / safe[..., None, None], 0.0))
            H = _pair_hess_full(i_hi, i_lo, blocks, n)
            h = np.zeros(n)
            h[ipsi] = (w[:, None] * 2 * tau * c2 / x[ipsi] ** 3)
            _, _, d2 = compute(x)
            if d2 is not None:
                h[self.igam] += w[self.lk] * d2
            return H + sp.diags(h)

        return ConstraintBlock("budget", fn, hess, values)

    def _separation_blocks(self):
        """d_min^2 - (2 D^l.(q_k - q_i) - ||D^l||^2) <= 0 for every pair and free slot."""
        s, n = self.s, self.n
        K, N = s.num_uavs, s.num_slots
        out = []
        for k in range(K):
            for i in range(k + 1, K):
                slots = np.array([t for t in range(N) if self.qidx[k, t, 0] >= 0 or self.qidx[i, t, 0] >= 0])
                if not slots.size:
                    continue
                Dl = self.q_l[k, slots] - self.q_l[i, slots]
                m = slots.size
                r = np.repeat(np.arange(m)[:, None], 2, axis=1)
                G = _coo(np.concatenate([r, r]), np.concatenate([self.qidx[k, slots], self.qidx[i, slots]]),
                         np.concatenate([-2 * Dl, 2 * Dl]), (m, n))
                const = s.min_uav_separation ** 2 + np.sum(Dl ** 2, axis=-1)

                def values(x, k=k, i=i, slots=slots, Dl=Dl, const=const):
                    q = self.traj(x)
                    return const - 2 * np.sum(Dl * (q[k, slots] - q[i, slots]), axis=-1)

                out.append(ConstraintBlock(f"separation_{k}_{i}", lambda x, v=values, G=G: (v(x), G), None, values))
        return out

    def _positive_block(self, name, idx):
        n, m = self.n, len(idx)
        G = _coo(np.arange(m), idx, -np.ones(m), (m, n))
        return ConstraintBlock(name, lambda x: (-x[idx], G), None, lambda x: -x[idx])

    def _distance_block(self):
        s, n = self.s, self.n
        P = len(self.links)
        lm, lk, ln = self.lm, self.lk, self.ln
        mu = s.mu_positions[lm]
        qi = self.qidx[lk, ln]                                    # (P, 2)
        r2 = np.repeat(np.arange(P)[:, None], 2, axis=1)
        H2 = s.uav_altitude ** 2
        if self.tangent:
            base = self.q_l[lk, ln] - mu
            G = _coo(r2, qi, -2 * base, (P, n)) + _coo(np.arange(P), self.iS, np.ones(P), (P, n))
            const = H2 + np.sum(base ** 2, axis=-1) - 2 * np.sum(base * self.q_l[lk, ln], axis=-1)

            def values(x):
                q = self.traj(x)[lk, ln]
                return x[self.iS] - (const + 2 * np.sum(base * q, axis=-1))

            return ConstraintBlock("distance", lambda x: (values(x), G), None, values)

        def values(x):
            q = self.traj(x)[lk, ln]
            return H2 + np.sum((q - mu) ** 2, axis=-1) - x[self.iS]

        def fn(x):
            q = self.traj(x)[lk, ln]
            J = _coo(r2, qi, 2 * (q - mu), (P, n)) + _coo(np.arange(P), self.iS, -np.ones(P), (P, n))
            return values(x), J

        def hess(x, w):
            h = np.zeros(n)
            np.add.at(h, qi[qi >= 0], (2 * np.repeat(w[:, None], 2, axis=1))[qi >= 0])
            return h

        return ConstraintBlock("distance", fn, hess, values)

    def _rate_block(self):
        s, n = self.s, self.n
        P = len(self.links)
        sig, pb = s.uav_noise_power, self.p * s.ref_channel_gain
        S_l, B = self.S_l, self.bw

        def values(x):
            S = x[self.iS]
            ok = S * sig + pb > 0
            Ss = np.where(ok, S, S_l)
            return np.where(ok, x[self.igam] - rate_lower_bound(Ss, S_l, self.p, B, s.ref_channel_gain, sig), np.inf)

        def fn(x):
            S = x[self.iS]
            dS = -B * LOG2E * (sig / (S * sig + pb) - 1.0 / S_l)
            J = _coo(np.arange(P), self.igam, np.ones(P), (P, n)) + _coo(np.arange(P), self.iS, dS, (P, n))
            return values(x), J

        def hess(x, w):
            h = np.zeros(n)
            S = x[self.iS]
            h[self.iS] = w * B * LOG2E * sig ** 2 / (S * sig + pb) ** 2
            return h

        return ConstraintBlock("rate", fn, hess, values)

    def _latency_blocks(self):
        s, n = self.s, self.n
        P = len(self.links)
        N = s.num_slots
        if not self.joint:
            # a / gamma + c / f - tau <= 0 with the frequencies held fixed.
            slack = self.tau - self.c / self.f

            def values(x):
                gam = x[self.igam]
                return np.where(gam > 0, self.a / np.where(gam > 0, gam, 1.0) - slack, np.inf)

            def fn(x):
                gam = x[self.igam]
                return values(x), _coo(np.arange(P), self.igam, -self.a / gam ** 2, (P, n))

            def hess(x, w):
                h = np.zeros(n)
                h[self.igam] = w * 2 * self.a / x[self.igam] ** 3
                return h

            return [ConstraintBlock("latency", fn, hess, values)]
        # Joint mode: the latency-tight frequency must fit the UAV's capacity in its slot.
        row_of = self.lk * N + self.ln
        used, rows = np.unique(row_of, return_inverse=True)
        G = sp.csr_matrix((np.ones(P), (rows, np.arange(P))), shape=(used.size, P))
        cap = s.uav_max_freq

        def values(x):
            f = self._tight_freq(x[self.igam])[0]
            if not np.all(np.isfinite(f)):
                return np.full(used.size, np.inf)
            return G @ f - cap

        def fn(x):
            _, f1, _ = self._tight_freq(x[self.igam])
            return values(x), _coo(rows, self.igam, f1, (used.size, n))

        def hess(x, w):
            h = np.zeros(n)
            h[self.igam] = (G.T @ w) * self._tight_freq(x[self.igam])[2]
            return h

        def dom_values(x):
            gam = x[self.igam]
            return np.where(gam > 0, self.a / np.where(gam > 0, gam, 1.0) - self.tau, np.inf)

        def dom_fn(x):
            gam = x[self.igam]
            return dom_values(x), _coo(np.arange(P), self.igam, -self.a / gam ** 2, (P, n))

        def dom_hess(x, w):
            h = np.zeros(n)
            h[self.igam] = w * 2 * self.a / x[self.igam] ** 3
            return h

        return [ConstraintBlock("uav_freq_cap", fn, hess, values),
                ConstraintBlock("latency_domain", dom_fn, dom_hess, dom_values)]

    # -- start point -----------------------------------------------------------
    def _start(self):
        s = self.s
        N = s.num_slots
        x = np.zeros(self.n)
        scale = np.ones(self.n)
        x[self.qidx[self.qfree]] = self.q_l[self.qfree]
        scale[self.qidx[self.qfree]] = max(s.area_side, 1.0)
        if N > 1:
            v = np.linalg.norm(np.diff(self.q_l, axis=1), axis=-1) / s.slot_duration
            psi = np.maximum(v, 0.9 * self.settings.min_speed_floor)
            x[self.ipsi] = psi
            scale[self.ipsi.ravel()] = np.maximum(psi.ravel(), 1.0)
        if len(self.links):
            S0 = self.S_l * (1 - 1e-6 if self.tangent else 1 + 1e-6)
            g0 = rate_lower_bound(S0, self.S_l, self.p, self.bw, s.ref_channel_gain, s.uav_noise_power)
            x[self.iS] = S0
            x[self.igam] = g0 * (1 - 1e-4)
            scale[self.iS] = self.S_l
            scale[self.igam] = g0
        return x, scale

    def aux(self, x) -> TrajectoryAux:
        return TrajectoryAux(psi=x[self.ipsi], gamma=x[self.igam], S=x[self.iS], links=self.links,
                             q_l=self.q_l, S_l=self.S_l)


def _pair_hess(i_hi, i_lo, W, n):
    """Hessian of sum w ||q_hi - q_lo||^2 / 2 scaled: pattern [[1, -1], [-1, 1]] per coordinate."""
    r = np.concatenate([i_hi, i_lo, i_hi, i_lo]).ravel()
    c = np.concatenate([i_hi, i_lo, i_lo, i_hi]).ravel()
    v = np.concatenate([W, W, -W, -W]).ravel()
    keep = (r >= 0) & (c >= 0)
    return sp.csr_matrix((v[keep], (r[keep], c[keep])), shape=(n, n))


def _pair_hess_full(i_hi, i_lo, blocks, n):
    """Hessian for a function of dq = q_hi - q_lo with 2x2 blocks per (k, slot)."""
    rs, cs, vs = [], [], []
    for a_idx, b_idx, sign in ((i_hi, i_hi, 1), (i_lo, i_lo, 1), (i_hi, i_lo, -1), (i_lo, i_hi, -1)):
        for p in range(2):
            for q in range(2):
                rs.append(a_idx[..., p].ravel())
                cs.append(b_idx[..., q].ravel())
                vs.append(sign * blocks[..., p, q].ravel())
    r, c, v = np.concatenate(rs), np.concatenate(cs), np.concatenate(vs)
    keep = (r >= 0) & (c >= 0)
    return sp.csr_matrix((v[keep], (r[keep], c[keep])), shape=(n, n))


# ----------------------------------------------------------------- SCA loop

def build_convexified(s: Scenario, d: Decision, y, settings: SolverSettings | None = None,
                      joint: bool | None = None) -> ConvexifiedTrajectory:
    return ConvexifiedTrajectory(s, d, y, settings or SolverSettings(), joint)


def uav_link_energy(s: Scenario, d: Decision, y):
    """(weighted UAV transmit energy, weighted UAV transmit + compute energy) with exact rates."""
    _, e_ut, e_uc, *_ = energies(s, d)
    y2 = np.asarray(y, float) ** 2
    tran = float(np.sum(y2 * e_ut))
    return tran, tran + float(np.sum(y2 * e_uc.sum(axis=1)))


def retime(s: Scenario, d: Decision, traj, joint: bool) -> Decision:
    """Decision on a new trajectory; in joint mode UAV frequencies are re-fitted to the slot latency."""
    nd = d.copy(trajectories=traj)
    if not joint:
        return nd
    _, r_uav, _ = link_rates(s, nd)
    bits = (nd.omega_uav * s.task_bits)[:, None, :] * nd.assoc
    with np.errstate(divide="ignore", invalid="ignore"):
        slack = s.slot_duration - np.where(bits > 0, bits / r_uav, 0.0)
        f = np.where(bits > 0, bits * s.cycles_per_bit[:, None, :] / slack, 0.0)
    f = np.where((bits > 0) & ~(slack > 0), np.inf, f)
    return nd.copy(freq_uav=f)


def sca_solve(s: Scenario, d: Decision, y, settings: SolverSettings | None = None,
              joint: bool | None = None):
    """Run SCA on the trajectories; returns (Decision, ScaReport)."""
    settings = settings or SolverSettings()
    joint = settings.offload_mode == "joint" if joint is None else joint
    tol = settings.feasibility_tolerance
    start_bad = [v for v in check_feasibility(s, d, tol, settings.min_speed_floor)
                 if v.tag in ("endpoint", "separation", "speed")]
    if start_bad:
        raise ExpansionInfeasible(f"start trajectory violates {start_bad[0]}")
    report = ScaReport()
    cur = d
    tran, total = uav_link_energy(s, cur, y)
    if total <= 0 or s.num_slots <= 2:
        # No UAV traffic to serve, or no free waypoints.
        return cur, report
    for it in range(settings.sca_max_iters):
        prob = ConvexifiedTrajectory(s, cur, y, settings, joint)
        if prob.n == 0:
            break
        res = solve_convex(prob.program, settings)
        report.aux = prob.aux(res.x)
        target = prob.traj(res.x)
        accepted = False
        blend = 1.0
        for _ in range(6):
            traj = cur.trajectories + blend * (target - cur.trajectories)
            cand = retime(s, cur, traj, joint)
            ok = np.all(np.isfinite(cand.freq_uav)) and not check_feasibility(s, cand, tol, settings.min_speed_floor)
            if ok:
                t2, tot2 = uav_link_energy(s, cand, y)
                if t2 <= tran * (1 + 1e-12) and tot2 <= total * (1 + 1e-12):
                    accepted = True
                    break
            blend *= 0.5
        report.iterations = it + 1
        if not accepted:
            report.steps.append(ScaStep(it, tran, tran, total, total, False, 0.0))
            break
        report.steps.append(ScaStep(it, tran, t2, total, tot2, True, blend))
        change = (total - tot2) / max(total, 1e-300)
        cur, tran, total = cand, t2, tot2
        if change < settings.sca_tolerance:
            break
    return cur, report
