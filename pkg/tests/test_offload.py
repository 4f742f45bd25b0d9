import numpy as np
import pytest

from oracles import grid_offload_minimum
from sagin_mec.ao import initial_point
from sagin_mec.errors import InfeasibleOffload
from sagin_mec.fp import update_weights
from sagin_mec.model import check_feasibility, weighted_energy
from sagin_mec.scenario import SolverSettings, generate_scenario
from sagin_mec.sp_offload import path_coefficients, solve_offload, solve_offload_lp


def tiny_instance(seed):
    s = generate_scenario(1, 1, 2, 10, seed)
    d = initial_point(s)
    rng = np.random.default_rng(seed)
    d = d.copy(power_uav=d.power_uav * rng.uniform(0.05, 2.0), power_leo=d.power_leo * rng.uniform(0.05, 2.0),
               freq_local=d.freq_local * rng.uniform(0.3, 1.0), freq_uav=d.freq_uav * rng.uniform(0.5, 9.0),
               freq_leo=d.freq_leo * rng.uniform(0.5, 9.0))
    return s, d


@pytest.mark.parametrize("seed", range(10))
def test_lp_against_simplex_grid(seed):
    s, d = tiny_instance(seed)
    y = update_weights(s, d)
    W, caps = path_coefficients(s, d)
    nd = solve_offload_lp(s, d, y, SolverSettings())
    lp = float(np.sum(y[..., None] ** 2 * W * nd.offload))
    grid = grid_offload_minimum(W, caps, y)
    assert lp <= grid + 1e-9 * grid
    assert lp >= 0.98 * grid


def test_tight_caps_are_infeasible(desk, desk_start):
    slow = desk_start.copy(freq_local=desk_start.freq_local * 0.05, freq_uav=desk_start.freq_uav * 0.05,
                           freq_leo=desk_start.freq_leo * 0.05)
    _, caps = path_coefficients(desk, slow)
    assert np.all(caps.sum(axis=-1) < 1)
    with pytest.raises(InfeasibleOffload):
        solve_offload_lp(desk, slow, update_weights(desk, slow), SolverSettings())


@pytest.mark.parametrize("mode", ["lp", "joint"])
def test_update_is_feasible_and_not_worse(desk, desk_start, mode):
    y = update_weights(desk, desk_start)
    st = SolverSettings(offload_mode=mode)
    nd = solve_offload(desk, desk_start, y, st)
    assert check_feasibility(desk, nd, 1e-6) == []
    assert np.allclose(nd.offload.sum(axis=-1), 1.0)
    assert weighted_energy(desk, nd, y) <= weighted_energy(desk, desk_start, y) * (1 + 1e-9)


def test_joint_form_beats_fixed_frequency_form(desk, desk_start):
    y = update_weights(desk, desk_start)
    lp = solve_offload(desk, desk_start, y, SolverSettings(offload_mode="lp"))
    joint = solve_offload(desk, desk_start, y, SolverSettings(offload_mode="joint"))
    assert weighted_energy(desk, joint, y) <= weighted_energy(desk, lp, y) * (1 + 1e-6)


def test_local_and_leo_only(desk, desk_start):
    y = update_weights(desk, desk_start)
    d = initial_point(desk, paths=(True, False, True))
    nd = solve_offload(desk, d, y, SolverSettings(), paths=(True, False, True))
    assert np.all(nd.offload[..., 1] == 0)
