"""Problem instances: static scenario data, solver settings, generation and validation.

All quantities are linear SI (watts, hertz, joules, metres). Decibel-style table
entries are converted once, here.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import InvalidArgument

# Default physical parameters (linear SI).
DEFAULT_PARAMS = dict(
    slot_duration=1.0,
    uav_altitude=100.0,
    min_uav_separation=50.0,
    max_uav_speed=50.0,
    propulsion_c1=0.00614,
    propulsion_c2=15.976,
    ref_channel_gain=10 ** (-60 / 10),        # -60 dB
    uav_noise_power=10 ** (-170 / 10) * 1e-3,  # -170 dBm -> W
    leo_noise_power=10 ** (-170 / 10) * 1e-3,
    uav_bandwidth=1e6,
    leo_bandwidth=1e6,
    cycles_per_bit=100.0,
    mu_max_freq=5e9,
    uav_max_freq=9e9,
    leo_max_freq=9e9,
    mu_energy_coeff=1e-26,
    uav_energy_coeff=1e-27,
    leo_energy_coeff=1e-27,
    max_power_uav_link=3.0,
    max_power_leo_link=3.0,
)
TASK_BITS_RANGE = (5.5e6, 6.5e6)
LEO_GAIN_RANGE = (10 ** 0.5, 10 ** 1.0)  # 5..10 dB

_ARRAY_FIELDS = {
    "leo_gain": 1,
    "uav_bandwidth": 2,
    "mu_positions": 2,
    "uav_start": 2,
    "uav_end": 2,
    "task_bits": 2,
    "cycles_per_bit": 2,
}

_POSITIVE_SCALARS = (
    "slot_duration", "uav_altitude", "min_uav_separation", "max_uav_speed",
    "propulsion_c1", "propulsion_c2", "ref_channel_gain", "uav_noise_power",
    "leo_noise_power", "leo_bandwidth", "mu_max_freq", "uav_max_freq",
    "leo_max_freq", "mu_energy_coeff", "uav_energy_coeff", "leo_energy_coeff",
    "max_power_uav_link", "max_power_leo_link", "uav_energy_budget", "area_side",
)


def _frozen(a, ndim):
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise InvalidArgument(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Scenario:
    num_mus: int
    num_uavs: int
    num_slots: int
    slot_duration: float
    uav_altitude: float
    min_uav_separation: float
    max_uav_speed: float
    propulsion_c1: float
    propulsion_c2: float
    ref_channel_gain: float
    uav_noise_power: float
    leo_noise_power: float
    leo_gain: np.ndarray          # (M,)
    uav_bandwidth: np.ndarray     # (M, K)
    leo_bandwidth: float
    mu_positions: np.ndarray      # (M, 2)
    uav_start: np.ndarray         # (K, 2)
    uav_end: np.ndarray           # (K, 2)
    task_bits: np.ndarray         # (M, N)
    cycles_per_bit: np.ndarray    # (M, N)
    mu_max_freq: float
    uav_max_freq: float
    leo_max_freq: float
    mu_energy_coeff: float
    uav_energy_coeff: float
    leo_energy_coeff: float
    max_power_uav_link: float
    max_power_leo_link: float
    uav_energy_budget: float
    area_side: float

    def __post_init__(self):
        for name, ndim in _ARRAY_FIELDS.items():
            object.__setattr__(self, name, _frozen(getattr(self, name), ndim))
        for name in ("num_mus", "num_uavs", "num_slots"):
            object.__setattr__(self, name, int(getattr(self, name)))
        for name in _POSITIVE_SCALARS:
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def period(self) -> float:
        return self.slot_duration * self.num_slots

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Scenario":
        names = {f.name for f in dataclasses.fields(cls)}
        missing = names - set(data)
        if missing:
            raise InvalidArgument(f"scenario document lacks fields: {sorted(missing)}")
        return cls(**{k: data[k] for k in names})

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return json.dumps(self.to_dict()) == json.dumps(other.to_dict())

    __hash__ = None


@dataclass(frozen=True)
class SolverSettings:
    ao_tolerance: float = 1e-3
    ao_max_iters: int = 50
    sca_max_iters: int = 10
    sca_tolerance: float = 1e-4
    barrier_t0: float = 1.0
    barrier_mu: float = 20.0
    barrier_tolerance: float = 1e-9
    newton_tolerance: float = 1e-10
    newton_max_steps: int = 200
    kkt_tolerance: float = 1e-6
    lp_tolerance: float = 1e-9
    bnb_gap_tolerance: float = 1e-9
    bnb_node_limit: int = 20000
    min_speed_floor: float = 0.1
    feasibility_tolerance: float = 1e-6
    rng_seed: int = 0
    # "joint": offloading update re-derives latency-tight frequencies (default);
    # "lp": frequencies held fixed, pure LP over the offloading fractions.
    offload_mode: str = "joint"
    # "conservative": S >= squared distance; "tangent": S <= linearised distance.
    distance_row: str = "conservative"

    def __post_init__(self):
        for name in ("ao_tolerance", "sca_tolerance", "barrier_tolerance", "newton_tolerance",
                     "kkt_tolerance", "lp_tolerance", "bnb_gap_tolerance", "min_speed_floor",
                     "feasibility_tolerance"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be > 0")
        if self.barrier_mu <= 1:
            raise InvalidArgument("barrier_mu must be > 1")
        if self.ao_max_iters < 0 or self.sca_max_iters < 0:
            raise InvalidArgument("iteration limits must be >= 0")
        if self.offload_mode not in ("joint", "lp"):
            raise InvalidArgument(f"unknown offload_mode {self.offload_mode!r}")
        if self.distance_row not in ("conservative", "tangent"):
            raise InvalidArgument(f"unknown distance_row {self.distance_row!r}")

    def replace(self, **changes) -> "SolverSettings":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SolverSettings":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidArgument(f"unknown settings keys: {sorted(unknown)}")
        return cls(**data)


def propulsion_energy(speed, slot_duration, c1, c2, floor=0.1):
    """Per-slot flight energy tau*(c1 v^3 + c2 / v), speed clamped below by ``floor``."""
    v = np.maximum(np.asarray(speed, dtype=float), floor)
    return slot_duration * (c1 * v ** 3 + c2 / v)


def straight_line(start, end, num_slots) -> np.ndarray:
    """Uniform straight-line trajectories, shape (K, N, 2)."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    if num_slots == 1:
        return start[:, None, :].copy()
    frac = np.linspace(0.0, 1.0, num_slots)
    return start[:, None, :] + frac[None, :, None] * (end - start)[:, None, :]


def default_energy_budget(uav_start, uav_end, num_slots, p=DEFAULT_PARAMS, floor=0.1) -> float:
    """Twice the straight-line propulsion energy plus the full compute-budget energy."""
    traj = straight_line(uav_start, uav_end, num_slots)
    tau = p["slot_duration"]
    if num_slots > 1:
        speed = np.linalg.norm(np.diff(traj, axis=1), axis=2) / tau
        prop = propulsion_energy(speed, tau, p["propulsion_c1"], p["propulsion_c2"], floor).sum(axis=1)
    else:
        prop = np.zeros(len(traj))
    compute = p["uav_energy_coeff"] * p["uav_max_freq"] ** 3 * tau * num_slots
    return float(2.0 * prop.max() + compute)


def generate_scenario(mus: int, uavs: int, slots: int, area: float, seed: int,
                      **overrides) -> Scenario:
    """Random MU layout in an ``area`` x ``area`` square with default parameters.

    UAVs start on the left edge and finish on the right edge at evenly spaced
    heights. ``overrides`` replaces any default scalar before the energy budget
    is derived (e.g. ``uav_bandwidth=2e6``).
    """
    if min(mus, uavs, slots) < 1:
        raise InvalidArgument("mus, uavs and slots must all be >= 1")
    if not area > 0:
        raise InvalidArgument("area must be > 0")
    params = dict(DEFAULT_PARAMS)
    unknown = set(overrides) - set(params) - {"uav_energy_budget"}
    if unknown:
        raise InvalidArgument(f"unknown overrides: {sorted(unknown)}")
    params.update({k: v for k, v in overrides.items() if k != "uav_energy_budget"})

    spacing = area / (uavs + 1)
    if uavs > 1 and spacing < params["min_uav_separation"]:
        raise InvalidArgument(
            f"min_uav_separation: {uavs} UAVs on a {area} m edge are {spacing:.3g} m apart "
            f"< {params['min_uav_separation']} m")
    reach = (slots - 1) * params["slot_duration"] * params["max_uav_speed"]
    if area > reach:
        raise InvalidArgument(
            f"max_uav_speed: edge-to-edge flight of {area} m exceeds (N-1)*tau*V_max = {reach} m")

    rng = np.random.default_rng(seed)
    mu_positions = rng.uniform(0.0, area, size=(mus, 2))
    task_bits = rng.uniform(*TASK_BITS_RANGE, size=(mus, slots))
    leo_gain = rng.uniform(*LEO_GAIN_RANGE, size=mus)

    ys = spacing * np.arange(1, uavs + 1)
    uav_start = np.column_stack([np.zeros(uavs), ys])
    uav_end = np.column_stack([np.full(uavs, float(area)), ys])
    budget = overrides.get("uav_energy_budget")
    if budget is None:
        budget = default_energy_budget(uav_start, uav_end, slots, params)

    return Scenario(
        num_mus=mus, num_uavs=uavs, num_slots=slots,
        slot_duration=params["slot_duration"],
        uav_altitude=params["uav_altitude"],
        min_uav_separation=params["min_uav_separation"],
        max_uav_speed=params["max_uav_speed"],
        propulsion_c1=params["propulsion_c1"],
        propulsion_c2=params["propulsion_c2"],
        ref_channel_gain=params["ref_channel_gain"],
        uav_noise_power=params["uav_noise_power"],
        leo_noise_power=params["leo_noise_power"],
        leo_gain=leo_gain,
        uav_bandwidth=np.full((mus, uavs), params["uav_bandwidth"]),
        leo_bandwidth=params["leo_bandwidth"],
        mu_positions=mu_positions,
        uav_start=uav_start,
        uav_end=uav_end,
        task_bits=task_bits,
        cycles_per_bit=np.full((mus, slots), params["cycles_per_bit"]),
        mu_max_freq=params["mu_max_freq"],
        uav_max_freq=params["uav_max_freq"],
        leo_max_freq=params["leo_max_freq"],
        mu_energy_coeff=params["mu_energy_coeff"],
        uav_energy_coeff=params["uav_energy_coeff"],
        leo_energy_coeff=params["leo_energy_coeff"],
        max_power_uav_link=params["max_power_uav_link"],
        max_power_leo_link=params["max_power_leo_link"],
        uav_energy_budget=budget,
        area_side=area,
    )


def validate_scenario(s: Scenario) -> list[str]:
    """Return one message per violated invariant; empty when the scenario is valid."""
    out = []
    M, K, N = s.num_mus, s.num_uavs, s.num_slots
    for name in ("num_mus", "num_uavs", "num_slots"):
        if getattr(s, name) < 1:
            out.append(f"{name}: must be >= 1, got {getattr(s, name)}")
    for name in _POSITIVE_SCALARS:
        v = getattr(s, name)
        if not (np.isfinite(v) and v > 0):
            out.append(f"{name}: must be > 0, got {v}")
    shapes = {
        "leo_gain": (M,), "uav_bandwidth": (M, K), "mu_positions": (M, 2),
        "uav_start": (K, 2), "uav_end": (K, 2), "task_bits": (M, N), "cycles_per_bit": (M, N),
    }
    bad_shape = False
    for name, shape in shapes.items():
        arr = getattr(s, name)
        if arr.shape != shape:
            out.append(f"{name}: expected shape {shape}, got {arr.shape}")
            bad_shape = True
    if bad_shape:
        return out
    for name in ("leo_gain", "uav_bandwidth", "cycles_per_bit"):
        arr = getattr(s, name)
        if not np.all(np.isfinite(arr) & (arr > 0)):
            out.append(f"{name}: all entries must be > 0")
    if not np.all(np.isfinite(s.task_bits) & (s.task_bits >= 0)):
        out.append("task_bits: all entries must be >= 0")
    for label, pts in (("start", s.uav_start), ("end", s.uav_end)):
        for k in range(K):
            for i in range(k + 1, K):
                d = float(np.linalg.norm(pts[k] - pts[i]))
                if d < s.min_uav_separation:
                    out.append(f"min_uav_separation: UAV {k} and {i} {label} points are "
                               f"{d:.6g} m apart < {s.min_uav_separation}")
    reach = (N - 1) * s.slot_duration * s.max_uav_speed
    for k in range(K):
        d = float(np.linalg.norm(s.uav_end[k] - s.uav_start[k]))
        if d > reach + 1e-9:
            out.append(f"max_uav_speed: UAV {k} straight-line distance {d:.6g} m > "
                       f"(N-1)*tau*V_max = {reach:.6g} m")
    return out


def dump_document(scenario: Scenario, settings: SolverSettings | None = None) -> str:
    doc = {"scenario": scenario.to_dict(),
           "settings": (settings or SolverSettings()).to_dict()}
    return json.dumps(doc, indent=1, sort_keys=True)


def load_document(text: str) -> tuple[Scenario, SolverSettings]:
    doc = json.loads(text)
    if "scenario" not in doc:
        raise InvalidArgument("document has no 'scenario' section")
    settings = SolverSettings.from_dict(doc.get("settings", {}))
    return Scenario.from_dict(doc["scenario"]), settings
