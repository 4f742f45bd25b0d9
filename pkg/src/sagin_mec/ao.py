"""Alternating optimisation driver and the baseline schemes."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NoFeasibleStart, SaginError
from .model import Decision, check_feasibility, objective, weighted_energy
from .scenario import Scenario, SolverSettings, straight_line

SCHEMES = ("proposed", "single_uav", "fixed_trajectory", "fixed_allocation", "ls_offloading")


def nearest_association(s: Scenario, traj) -> np.ndarray:
    """alpha[m, k, n] = 1 for the horizontally closest UAV; ties go to the lowest index."""
    diff = np.asarray(traj)[None, :, :, :] - s.mu_positions[:, None, None, :]
    dist = np.sum(diff ** 2, axis=-1)                     # (M, K, N)
    best = np.argmin(dist, axis=1)                        # first minimum wins
    return (best[:, None, :] == np.arange(s.num_uavs)[None, :, None]).astype(int)


def fit_shares(target, caps) -> np.ndarray:
    """Clip a share triple to per-path caps and move the excess to the paths with most headroom.

    ``target`` is (3,) or (M, N, 3); ``caps`` is (M, N, 3). Raises NoFeasibleStart
    when the caps of a cell sum to less than one.
    """
    caps = np.asarray(caps, float)
    w = np.minimum(np.broadcast_to(np.asarray(target, float), caps.shape), caps).copy()
    if np.any(caps.sum(axis=-1) < 1 - 1e-12):
        m, n = np.argwhere(caps.sum(axis=-1) < 1 - 1e-12)[0]
        raise NoFeasibleStart(f"no path split of task ({m}, {n}) fits within the slot")
    for idx in np.ndindex(caps.shape[:-1]):
        deficit = 1.0 - w[idx].sum()
        for j in np.argsort(-(caps[idx] - w[idx]), kind="stable"):
            if deficit <= 0:
                break
            add = min(deficit, caps[idx][j] - w[idx][j])
            w[idx][j] += add
            deficit -= add
    return w / w.sum(axis=-1, keepdims=True)


def initial_point(s: Scenario, shares=(1 / 3, 1 / 3, 1 / 3), paths=(True, True, True)) -> Decision:
    """Straight lines, nearest-UAV association, fair-share resources, clipped even split."""
    from .sp_offload import path_coefficients

    M, N = s.num_mus, s.num_slots
    traj = straight_line(s.uav_start, s.uav_end, N)
    assoc = nearest_association(s, traj)
    d = Decision(
        trajectories=traj, assoc=assoc, offload=np.tile([1.0, 0.0, 0.0], (M, N, 1)),
        power_uav=assoc * 0.5 * s.max_power_uav_link,
        power_leo=np.full((M, N), 0.5 * s.max_power_leo_link),
        freq_local=np.full((M, N), s.mu_max_freq),
        freq_uav=assoc * s.uav_max_freq / M,
        freq_leo=np.full((M, N), s.leo_max_freq / M))
    _, caps = path_coefficients(s, d)
    caps = caps * np.asarray(paths, float)
    target = np.asarray(shares, float) * np.asarray(paths, float)
    d = d.copy(offload=fit_shares(target, caps))
    if not paths[1]:
        d = d.copy(power_uav=np.zeros_like(d.power_uav), freq_uav=np.zeros_like(d.freq_uav))
    bad = check_feasibility(s, d)
    if bad:
        raise NoFeasibleStart(f"initial point violates {bad[0]}")
    return d


@dataclass(frozen=True)
class SchemeSpec:
    """Which blocks run and how the baselines are pinned."""
    scheme: str = "proposed"
    fixed_shares: tuple = (1 / 3, 1 / 3, 1 / 3)
    single_uav_index: int = 0

    def __post_init__(self):
        from .errors import InvalidArgument
        if self.scheme not in SCHEMES:
            raise InvalidArgument(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if len(self.fixed_shares) != 3 or min(self.fixed_shares) < 0 or abs(sum(self.fixed_shares) - 1) > 1e-9:
            raise InvalidArgument("fixed_shares must be three non-negative numbers summing to 1")

    @property
    def blocks(self) -> tuple:
        return {"proposed": ("sp1", "sp2", "sp3", "sp4"),
                "single_uav": ("sp1", "sp2", "sp3", "sp4"),
                "fixed_trajectory": ("sp1", "sp2", "sp3"),
                "fixed_allocation": ("sp1", "sp3", "sp4"),
                "ls_offloading": ("sp2", "sp3")}[self.scheme]

    @property
    def paths(self) -> tuple:
        return (True, False, True) if self.scheme == "ls_offloading" else (True, True, True)

    def to_dict(self):
        return {"scheme": self.scheme, "fixed_shares": list(self.fixed_shares),
                "single_uav_index": self.single_uav_index}

    @classmethod
    def from_dict(cls, data):
        return cls(scheme=data["scheme"], fixed_shares=tuple(data["fixed_shares"]),
                   single_uav_index=int(data["single_uav_index"]))


@dataclass
class IterationRecord:
    iteration: int
    phi: float
    surrogate: float
    deltas: dict            # block -> change of sum y^2 E_sum (negative is progress); None if skipped
    max_residual: float
    skipped: dict           # block -> error message
    weights: list           # y after this iteration
    sca_steps: list = field(default_factory=list)


@dataclass
class RunReport:
    scheme: SchemeSpec
    records: list
    decision: Decision
    weights: np.ndarray
    termination: str
    scenario_uavs: int
    timings: list = field(default_factory=list, compare=False)   # per-iteration ms by block

    def __eq__(self, other):
        if not isinstance(other, RunReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    @property
    def phi_trace(self) -> list:
        return [r.phi for r in self.records]

    @property
    def phi(self) -> float:
        return self.records[-1].phi

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration

    def to_dict(self) -> dict:
        """Everything except wall-clock timings, so equal runs serialise identically."""
        return {
            "scheme": self.scheme.to_dict(),
            "termination": self.termination,
            "scenario_uavs": self.scenario_uavs,
            "records": [dict(r.__dict__) for r in self.records],
            "decision": self.decision.to_dict(),
            "weights": np.asarray(self.weights).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        return cls(scheme=SchemeSpec.from_dict(data["scheme"]),
                   records=[IterationRecord(**r) for r in data["records"]],
                   decision=Decision.from_dict(data["decision"]),
                   weights=np.asarray(data["weights"], dtype=float),
                   termination=data["termination"], scenario_uavs=int(data["scenario_uavs"]))


def single_uav_scenario(s: Scenario, index: int = 0) -> Scenario:
    """The scenario restricted to one UAV."""
    sel = [index]
    return s.replace(num_uavs=1, uav_start=s.uav_start[sel], uav_end=s.uav_end[sel],
                     uav_bandwidth=s.uav_bandwidth[:, sel])


def _max_residual(s: Scenario, d: Decision, floor: float) -> float:
    bad = check_feasibility(s, d, 0.0, floor)
    return max((v.residual for v in bad), default=0.0)


def _run_block(name, s, d, y, settings, spec, sca_log):
    from .sp_association import solve_association
    from .sp_offload import solve_offload
    from .sp_power_freq import solve_power_freq
    from .sp_trajectory import sca_solve

    if name == "sp1":
        return solve_association(s, d, y, settings)
    if name == "sp2":
        return solve_offload(s, d, y, settings, spec.paths)
    if name == "sp3":
        return solve_power_freq(s, d, y, settings)[0]
    nd, rep = sca_solve(s, d, y, settings)
    sca_log.extend({"iteration": st.iteration, "tran_before": st.tran_before, "tran_after": st.tran_after,
                    "total_before": st.total_before, "total_after": st.total_after,
                    "accepted": st.accepted, "blend": st.blend} for st in rep.steps)
    return nd


def run_ao(s: Scenario, spec: SchemeSpec | None = None, settings: SolverSettings | None = None,
           start: Decision | None = None) -> RunReport:
    """Alternate the blocks of ``spec`` until the objective settles.

    Each block minimises sum y^2 E_sum with the others fixed. An update is kept
    only if it is feasible and does not raise that sum; otherwise the block's
    previous values stay and the failure is recorded.
    """
    from .fp import surrogate_value, update_weights

    spec = spec or SchemeSpec()
    settings = settings or SolverSettings()
    floor = settings.min_speed_floor
    if spec.scheme == "single_uav":
        s = single_uav_scenario(s, spec.single_uav_index)
    shares = spec.fixed_shares if spec.scheme == "fixed_allocation" else (1 / 3, 1 / 3, 1 / 3)
    d = start if start is not None else initial_point(s, shares, spec.paths)
    y = update_weights(s, d)
    phi = objective(s, d, floor)[0]
    records = [IterationRecord(0, phi, surrogate_value(s, d, y), {}, _max_residual(s, d, floor), {},
                               np.asarray(y).tolist())]
    timings = [{}]
    termination = "max_iters"
    all_skipped = 0
    for it in range(1, settings.ao_max_iters + 1):
        deltas, skipped, ms, sca_log = {}, {}, {}, []
        for name in spec.blocks:
            before = weighted_energy(s, d, y)
            t0 = time.perf_counter()
            try:
                nd = _run_block(name, s, d, y, settings, spec, sca_log)
                bad = check_feasibility(s, nd, settings.feasibility_tolerance, floor)
                if bad:
                    raise SaginError(f"update violates {bad[0]}")
                after = weighted_energy(s, nd, y)
                if not after <= before * (1 + 1e-9):
                    raise SaginError(f"update raised the weighted energy from {before:.9g} to {after:.9g}")
                d = nd
                deltas[name] = after - before
            except (SaginError, np.linalg.LinAlgError, FloatingPointError) as exc:
                skipped[name] = f"{type(exc).__name__}: {exc}"
                deltas[name] = None
            ms[name] = 1e3 * (time.perf_counter() - t0)
        y = update_weights(s, d)
        new_phi = objective(s, d, floor)[0]
        records.append(IterationRecord(it, new_phi, surrogate_value(s, d, y), deltas,
                                       _max_residual(s, d, floor), skipped, np.asarray(y).tolist(), sca_log))
        timings.append(ms)
        all_skipped = all_skipped + 1 if len(skipped) == len(spec.blocks) else 0
        if all_skipped >= 2:
            termination = "infeasible_subproblem"
            break
        change = abs(new_phi - phi) / max(1.0, abs(phi))
        phi = new_phi
        if change < settings.ao_tolerance:
            termination = "converged"
            break
    return RunReport(scheme=spec, records=records, decision=d, weights=np.asarray(y), termination=termination,
                     scenario_uavs=s.num_uavs, timings=timings)
