"""Physical model: kinematics, channels, rates, latencies, energies and the objective.

Array conventions: MU index m, UAV index k, slot n. Per-link arrays are (M, K, N),
per-task arrays (M, N), per-UAV arrays (K, N). Paths with a zero offloading share
contribute neither latency nor energy and need no positive rate or frequency.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InfeasibleDecision
from .scenario import Scenario, propulsion_energy

LN2 = np.log(2.0)
DEFAULT_TOL = 1e-6


@dataclass(eq=False)
class Decision:
    trajectories: np.ndarray  # (K, N, 2)
    assoc: np.ndarray         # (M, K, N) in {0, 1}
    offload: np.ndarray       # (M, N, 3): local, UAV, LEO shares
    power_uav: np.ndarray     # (M, K, N)
    power_leo: np.ndarray     # (M, N)
    freq_local: np.ndarray    # (M, N)
    freq_uav: np.ndarray      # (M, K, N)
    freq_leo: np.ndarray      # (M, N)

    def copy(self, **changes) -> "Decision":
        fields = {f.name: np.array(getattr(self, f.name), copy=True)
                  for f in dataclasses.fields(self)}
        fields.update({k: np.array(v, copy=True) for k, v in changes.items()})
        return Decision(**fields)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name).tolist() for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "Decision":
        kw = {f.name: np.asarray(data[f.name], dtype=float) for f in dataclasses.fields(cls)}
        kw["assoc"] = kw["assoc"].astype(int)
        return cls(**kw)

    def __eq__(self, other):
        if not isinstance(other, Decision):
            return NotImplemented
        return all(np.array_equal(getattr(self, f.name), getattr(other, f.name))
                   for f in dataclasses.fields(self))

    __hash__ = None

    @property
    def omega_local(self):
        return self.offload[..., 0]

    @property
    def omega_uav(self):
        return self.offload[..., 1]

    @property
    def omega_leo(self):
        return self.offload[..., 2]


@dataclass
class DerivedQuantities:
    speed: np.ndarray          # (K, N); slot 0 carries 0
    propulsion: np.ndarray     # (K, N); slot 0 carries 0
    gain: np.ndarray           # (M, K, N)
    rate_uav: np.ndarray       # (M, K, N)
    rate_leo: np.ndarray       # (M, N)
    lat_local: np.ndarray
    lat_uav: np.ndarray
    lat_leo: np.ndarray
    lat_sum: np.ndarray
    e_local: np.ndarray
    e_uav_tran: np.ndarray
    e_uav_com: np.ndarray      # (M, K, N)
    e_leo_tran: np.ndarray
    e_leo_com: np.ndarray
    e_sum: np.ndarray
    w1: np.ndarray             # (M, K, N) per-UAV summands of W1
    w2: np.ndarray
    w3: np.ndarray
    w4: np.ndarray
    w5: np.ndarray
    w6: np.ndarray
    phi: float


class Violation(NamedTuple):
    tag: str
    index: tuple
    residual: float

    def __str__(self):
        return f"({self.tag}) at {self.index}: residual {self.residual:.6g}"


def sq_distances(s: Scenario, traj) -> np.ndarray:
    """H^2 + ||q_k[n] - s_m||^2, shape (M, K, N)."""
    diff = np.asarray(traj)[None, :, :, :] - s.mu_positions[:, None, None, :]
    return s.uav_altitude ** 2 + np.sum(diff ** 2, axis=-1)


def channel_gains(s: Scenario, traj) -> np.ndarray:
    return s.ref_channel_gain / sq_distances(s, traj)


def uav_rate(s: Scenario, power, gain) -> np.ndarray:
    snr = np.asarray(power) * gain / s.uav_noise_power
    return s.uav_bandwidth[:, :, None] * np.log2(1.0 + snr)


def leo_rate(s: Scenario, power) -> np.ndarray:
    snr = np.asarray(power) * s.leo_gain[:, None] / s.leo_noise_power
    return s.leo_bandwidth * np.log2(1.0 + snr)


def link_rates(s: Scenario, d: Decision):
    """Return (gain (M,K,N), uav rate (M,K,N), leo rate (M,N))."""
    h = channel_gains(s, d.trajectories)
    return h, uav_rate(s, d.power_uav, h), leo_rate(s, d.power_leo)


def speeds(s: Scenario, traj) -> np.ndarray:
    """||v_k[n]|| for n >= 1 (0-based); slot 0 has no predecessor and reports 0."""
    traj = np.asarray(traj)
    v = np.zeros(traj.shape[:2])
    if traj.shape[1] > 1:
        v[:, 1:] = np.linalg.norm(np.diff(traj, axis=1), axis=-1) / s.slot_duration
    return v


def propulsion(s: Scenario, d: Decision, floor: float = 0.1):
    """Per-(k,n) speed and flight energy; the first slot carries no flight energy."""
    v = speeds(s, d.trajectories)
    e = propulsion_energy(v, s.slot_duration, s.propulsion_c1, s.propulsion_c2, floor)
    e[:, 0] = 0.0
    return v, e


def _safe_div(num, den):
    """num/den with 0 where num == 0; inf where num > 0 and den <= 0."""
    num = np.asarray(num, dtype=float)
    den = np.broadcast_to(np.asarray(den, dtype=float), num.shape)
    out = np.zeros(np.broadcast(num, den).shape)
    used = num != 0
    ok = used & (den > 0)
    out[ok] = num[ok] / den[ok]
    out[used & ~(den > 0)] = np.inf
    return out


def _paths(s: Scenario, d: Decision, rates=None):
    h, r_uav, r_leo = rates if rates is not None else link_rates(s, d)
    D, phi = s.task_bits, s.cycles_per_bit
    wl, wu, ws = d.omega_local, d.omega_uav, d.omega_leo
    a = d.assoc.astype(float)
    # The UAV path is "used" on the associated link only.
    bits_u = a * (wu * D)[:, None, :]
    return h, r_uav, r_leo, D, phi, wl, wu, ws, a, bits_u


def latencies(s: Scenario, d: Decision, rates=None):
    """Per-(m,n) local, UAV, LEO and total latency in seconds."""
    h, r_uav, r_leo, D, phi, wl, wu, ws, a, bits_u = _paths(s, d, rates)
    lat_l = _safe_div(wl * D * phi, d.freq_local)
    lat_u = (_safe_div(bits_u, r_uav) + _safe_div(bits_u * phi[:, None, :], d.freq_uav)).sum(axis=1)
    lat_s = _safe_div(ws * D, r_leo) + _safe_div(ws * D * phi, d.freq_leo)
    lat = np.maximum(np.maximum(lat_l, lat_u), lat_s)
    if not np.all(np.isfinite(lat)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(lat))[0])
        raise InfeasibleDecision(f"task {bad} uses a path with zero rate or frequency")
    return lat_l, lat_u, lat_s, lat


def energies(s: Scenario, d: Decision, rates=None):
    """Per-(m,n) energy breakdown; UAV compute energy is per (m,k,n)."""
    h, r_uav, r_leo, D, phi, wl, wu, ws, a, bits_u = _paths(s, d, rates)
    e_l = s.mu_energy_coeff * d.freq_local ** 2 * wl * D * phi
    e_ut = (d.power_uav * _safe_div(bits_u, r_uav)).sum(axis=1)
    e_uc = s.uav_energy_coeff * d.freq_uav ** 2 * bits_u * phi[:, None, :]
    e_st = d.power_leo * _safe_div(ws * D, r_leo)
    e_sc = s.leo_energy_coeff * d.freq_leo ** 2 * ws * D * phi
    e_sum = e_l + e_ut + e_uc.sum(axis=1) + e_st + e_sc
    if not np.all(np.isfinite(e_sum)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(e_sum))[0])
        raise InfeasibleDecision(f"task {bad} uses a path with zero rate")
    return e_l, e_ut, e_uc, e_st, e_sc, e_sum


def evaluate(s: Scenario, d: Decision, floor: float = 0.1) -> DerivedQuantities:
    """Compute every derived quantity and the objective; raises InfeasibleDecision."""
    rates = link_rates(s, d)
    h, r_uav, r_leo = rates
    D, phi = s.task_bits, s.cycles_per_bit
    lat_l, lat_u, lat_s, lat = latencies(s, d, rates)
    e_l, e_ut, e_uc, e_st, e_sc, e_sum = energies(s, d, rates)
    if np.any(e_sum <= 0):
        bad = tuple(int(i) for i in np.argwhere(e_sum <= 0)[0])
        raise InfeasibleDecision(f"task {bad} has non-positive total energy")
    v, e_prop = propulsion(s, d, floor)
    wu, a = d.omega_uav, d.assoc.astype(float)
    # Links without power carry no transmit cost (and would give 0 * inf).
    with np.errstate(invalid="ignore"):
        tx1 = np.where(d.power_uav > 0, d.power_uav * _safe_div((wu * D)[:, None, :] * np.ones_like(a), r_uav), 0.0)
    w1 = tx1 + s.uav_energy_coeff * d.freq_uav ** 2 * (wu * D * phi)[:, None, :]
    w2 = s.mu_energy_coeff * d.freq_local ** 2 * D * phi
    with np.errstate(invalid="ignore"):
        tx3 = np.where(d.power_uav > 0, d.power_uav * _safe_div(D[:, None, :] * a, r_uav), 0.0)
        tx4 = np.where(d.power_leo > 0, d.power_leo * _safe_div(D, r_leo), 0.0)
    w3 = (a * (tx3 + s.uav_energy_coeff * d.freq_uav ** 2 * (D * phi)[:, None, :])).sum(axis=1)
    w4 = tx4 + s.leo_energy_coeff * d.freq_leo ** 2 * D * phi
    w5 = e_l + e_sc + e_uc.sum(axis=1)
    w6 = e_st + e_ut
    phi_val = float(np.sum(D / e_sum))
    return DerivedQuantities(
        speed=v, propulsion=e_prop, gain=h, rate_uav=r_uav, rate_leo=r_leo,
        lat_local=lat_l, lat_uav=lat_u, lat_leo=lat_s, lat_sum=lat,
        e_local=e_l, e_uav_tran=e_ut, e_uav_com=e_uc, e_leo_tran=e_st, e_leo_com=e_sc,
        e_sum=e_sum, w1=w1, w2=w2, w3=w3, w4=w4, w5=w5, w6=w6, phi=phi_val)


def objective(s: Scenario, d: Decision, floor: float = 0.1):
    """Total energy efficiency sum_m sum_n D/E_sum (bit/J) and the derived cache."""
    dq = evaluate(s, d, floor)
    return dq.phi, dq


def weighted_energy(s: Scenario, d: Decision, y) -> float:
    """sum y^2 E_sum: the quantity every subproblem minimises (y held fixed)."""
    e_sum = energies(s, d)[-1]
    return float(np.sum(np.asarray(y) ** 2 * e_sum))


def uav_energy_use(s: Scenario, d: Decision, floor: float = 0.1) -> np.ndarray:
    """Per-UAV flight plus compute energy over the horizon, shape (K,)."""
    _, e_prop = propulsion(s, d, floor)
    e_uc = energies(s, d)[2]
    return e_prop.sum(axis=1) + e_uc.sum(axis=(0, 2))


def check_feasibility(s: Scenario, d: Decision, tol: float = DEFAULT_TOL,
                      floor: float = 0.1) -> list[Violation]:
    """Evaluate every constraint of the joint problem with additive tolerance ``tol``."""
    out: list[Violation] = []
    K = s.num_uavs
    q = np.asarray(d.trajectories)

    def add(tag, mask, resid):
        for idx in np.argwhere(mask):
            idx = tuple(int(i) for i in idx)
            out.append(Violation(tag, idx, float(resid[idx])))

    # endpoints
    r = np.linalg.norm(q[:, 0] - s.uav_start, axis=-1)
    add("endpoint", r > tol, r)
    r = np.linalg.norm(q[:, -1] - s.uav_end, axis=-1)
    add("endpoint", r > tol, r)
    # separation
    for k in range(K):
        for i in range(k + 1, K):
            sep = np.linalg.norm(q[k] - q[i], axis=-1)
            resid = s.min_uav_separation - sep
            for n in np.flatnonzero(resid > tol):
                out.append(Violation("separation", (k, i, int(n)), float(resid[n])))
    # speed
    v = speeds(s, q)
    resid = v - s.max_uav_speed
    add("speed", resid > tol, resid)
    # association
    a = np.asarray(d.assoc)
    resid = np.minimum(np.abs(a), np.abs(a - 1))
    add("assoc_binary", resid > tol, resid)
    resid = np.abs(a.sum(axis=1) - 1)
    add("assoc_one", resid > tol, resid)
    # offloading shares
    w = np.asarray(d.offload)
    resid = np.maximum(-w, w - 1)
    add("share_range", resid > tol, resid)
    resid = np.abs(w.sum(axis=-1) - 1)
    add("share_sum", resid > tol, resid)
    # frequencies
    resid = np.maximum(-d.freq_local, d.freq_local - s.mu_max_freq)
    add("local_freq", resid > tol, resid)
    resid = -d.freq_uav
    add("uav_freq", resid > tol, resid)
    resid = d.freq_uav.sum(axis=0) - s.uav_max_freq
    add("uav_freq", resid > tol, resid)
    resid = -d.freq_leo
    add("leo_freq", resid > tol, resid)
    resid = d.freq_leo.sum(axis=0) - s.leo_max_freq
    add("leo_freq", resid > tol, resid)
    # powers
    resid = np.maximum(-d.power_uav, d.power_uav - s.max_power_uav_link)
    add("uav_power", resid > tol, resid)
    resid = np.maximum(-d.power_leo, d.power_leo - s.max_power_leo_link)
    add("leo_power", resid > tol, resid)
    # latency, UAV energy budget
    try:
        lat = latencies(s, d)[-1]
        resid = lat - s.slot_duration
        add("latency", resid > tol, resid)
        use = uav_energy_use(s, d, floor)
        resid = use - s.uav_energy_budget
        add("uav_energy", resid > tol, resid)
    except InfeasibleDecision:
        out.append(Violation("latency", (), float("inf")))
    return out
