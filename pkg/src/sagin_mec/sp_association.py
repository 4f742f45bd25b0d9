"""MU-UAV association: a binary program solved by branch and bound.

For every (m, n) exactly one UAV is chosen. Each candidate pair is costed with
the weighted UAV-path energy y^2 (p w D / R + kappa f^2 w D phi). A pair is a
candidate only if the UAV path meets the slot latency. Coupling rows keep the
per-(k, n) frequency capacity and the per-UAV energy budget.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible, InfeasibleAssociation
from .model import Decision, channel_gains, propulsion, uav_rate
from .optim.bnb import BnbProblem, solve_bnb
from .optim.lp import LinearProgram, solve_lp
from .scenario import Scenario, SolverSettings


@dataclass
class AssociationCosts:
    cost: np.ndarray            # (M, K, N) weighted UAV-path energy
    feasible: np.ndarray        # (M, K, N) latency feasibility of the pair
    compute_energy: np.ndarray  # (M, K, N) UAV compute energy if associated
    freq: np.ndarray            # (M, K, N) frequency the pair would use
    power: np.ndarray           # (M, K, N) power the pair would use


def candidate_resources(s: Scenario, d: Decision):
    """Power and frequency a pair would use if (re)associated.

    Current values are kept on associated links. A switch reuses the power of
    the MU's current link and a fair share F^U_max / M of the UAV's cycles.
    """
    a = np.asarray(d.assoc, dtype=bool)
    cur_p = (d.power_uav * a).sum(axis=1)                       # (M, N)
    cur_p = np.where(cur_p > 0, cur_p, 0.5 * s.max_power_uav_link)
    power = np.where(a & (d.power_uav > 0), d.power_uav, cur_p[:, None, :])
    share = s.uav_max_freq / s.num_mus
    freq = np.where(a & (d.freq_uav > 0), d.freq_uav, share)
    return power, freq


def build_association_costs(s: Scenario, d: Decision, y, latency_tol: float = 1e-9) -> AssociationCosts:
    power, freq = candidate_resources(s, d)
    rate = uav_rate(s, power, channel_gains(s, d.trajectories))
    bits = (d.omega_uav * s.task_bits)[:, None, :]              # w^U D
    cycles = bits * s.cycles_per_bit[:, None, :]
    used = np.broadcast_to(bits > 0, rate.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_tx = np.where(used, bits / rate, 0.0)
        t_cp = np.where(used, cycles / freq, 0.0)
    e_cp = s.uav_energy_coeff * freq ** 2 * cycles
    cost = np.asarray(y, float)[:, None, :] ** 2 * (power * t_tx + e_cp)
    feasible = np.isfinite(t_tx) & (t_tx + t_cp <= s.slot_duration * (1 + latency_tol))
    cost = np.where(feasible, cost, 0.0)
    return AssociationCosts(cost=cost, feasible=feasible, compute_energy=np.where(used, e_cp, 0.0),
                            freq=freq, power=power)


def assign(costs: AssociationCosts, freq_cap: float, budget_rhs, settings: SolverSettings | None = None,
           prev=None):
    """Minimum-cost association over the candidate pairs; returns (alpha, cost).

    ``budget_rhs`` is the per-UAV energy left for computing. ``prev`` marks a
    previous association that stays admissible even if flagged infeasible.
    """
    settings = settings or SolverSettings()
    c = costs.cost
    M, K, N = c.shape
    allowed = costs.feasible.copy()
    if prev is not None:
        allowed |= np.asarray(prev, bool)
    if np.any(~allowed.any(axis=1)):
        m, n = np.argwhere(~allowed.any(axis=1))[0]
        raise InfeasibleAssociation(f"MU {m} has no admissible UAV in slot {n}")
    nv = M * K * N
    idx = np.arange(nv).reshape(M, K, N)
    # Ties go to the lowest UAV index through a perturbation far below the gap tolerance.
    scale = max(float(c.max(initial=0.0)), 1.0)
    tie = 1e-12 * scale * np.arange(K)[None, :, None] * np.ones_like(c)
    obj = (c + tie).ravel()

    A_eq = np.zeros((M * N, nv))
    for m in range(M):
        for n in range(N):
            A_eq[m * N + n, idx[m, :, n]] = 1.0
    rows, rhs = [], []
    for k in range(K):
        for n in range(N):
            r = np.zeros(nv)
            r[idx[:, k, n]] = costs.freq[:, k, n]
            rows.append(r)
            rhs.append(freq_cap)
    for k in range(K):
        r = np.zeros(nv)
        r[idx[:, k, :].ravel()] = costs.compute_energy[:, k, :].ravel()
        rows.append(r)
        rhs.append(budget_rhs[k])
    # Only rows that could bind are kept.
    A_ub, b_ub = [], []
    for r, b in zip(rows, rhs):
        if r[allowed.ravel()].sum() > b:
            A_ub.append(r)
            b_ub.append(b)
    A_ub = np.array(A_ub) if A_ub else None
    b_ub = np.array(b_ub) if b_ub else None
    fixed_off = ~allowed.ravel()

    def relax(lb, ub):
        ub = ub.copy()
        ub[fixed_off] = 0.0
        res = solve_lp(LinearProgram(c=obj, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=np.ones(M * N),
                                     lb=lb, ub=ub), tol=settings.lp_tolerance)
        return res.x, res.objective

    try:
        res = solve_bnb(BnbProblem(n=nv, binary=np.arange(nv), relax=relax),
                        gap_tol=settings.bnb_gap_tolerance, node_limit=settings.bnb_node_limit)
    except Infeasible as exc:
        raise InfeasibleAssociation(f"no association meets the capacity and budget rows: {exc}") from exc
    alpha = np.round(res.x).reshape(M, K, N).astype(int)
    return alpha, float((alpha * c).sum())


def solve_association(s: Scenario, d: Decision, y, settings: SolverSettings | None = None) -> Decision:
    """Re-associate MUs with fixed trajectories, offloading, powers and frequencies."""
    settings = settings or SolverSettings()
    costs = build_association_costs(s, d, y)
    _, e_prop = propulsion(s, d, settings.min_speed_floor)
    rhs = s.uav_energy_budget - e_prop.sum(axis=1)
    alpha, _ = assign(costs, s.uav_max_freq, rhs, settings, prev=d.assoc)
    used = alpha.astype(bool)
    return d.copy(assoc=alpha,
                  power_uav=np.where(used, costs.power, 0.0),
                  freq_uav=np.where(used, costs.freq, 0.0))
