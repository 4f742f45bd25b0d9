import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from conftest import one_cell
from sagin_mec.errors import InfeasibleDecision
from sagin_mec.model import (Decision, check_feasibility, energies, evaluate, latencies, link_rates, objective,
                             propulsion)

RATE_3W = 1e6 * np.log2(1 + 3e10)          # p=3 W, h=1e-10, noise 1e-20 W, B=1 MHz


def cell_decision(s, shares=(1.0, 0.0, 0.0), p_uav=3.0, p_leo=3.0, f_l=5e9, f_u=1e9, f_s=1e9, traj=None):
    M, K, N = s.num_mus, s.num_uavs, s.num_slots
    return Decision(
        trajectories=np.zeros((K, N, 2)) if traj is None else traj,
        assoc=np.ones((M, K, N), int),
        offload=np.tile(np.asarray(shares, float), (M, N, 1)),
        power_uav=np.full((M, K, N), p_uav), power_leo=np.full((M, N), p_leo),
        freq_local=np.full((M, N), f_l), freq_uav=np.full((M, K, N), f_u), freq_leo=np.full((M, N), f_s))


@pytest.fixture
def cell():
    return one_cell().replace(task_bits=np.full((1, 2), 6e6))


def test_gain_and_rate_overhead(cell):
    h, r, _ = link_rates(cell, cell_decision(cell))
    assert h[0, 0, 0] == pytest.approx(1e-10, rel=1e-12)
    assert r[0, 0, 0] == pytest.approx(RATE_3W, rel=1e-12)
    assert r[0, 0, 0] == pytest.approx(3.48e7, rel=2e-3)
    _, r0, _ = link_rates(cell, cell_decision(cell, p_uav=0.0))
    assert np.all(r0 == 0)


def test_latencies_hand_values(cell):
    lat_l, lat_u, _, _ = latencies(cell, cell_decision(cell, shares=(0.5, 0.3, 0.2)))
    assert lat_l[0, 0] == pytest.approx(0.06, rel=1e-12)
    assert lat_u[0, 0] == pytest.approx(1.8e6 / RATE_3W + 0.18, rel=1e-12)
    assert lat_u[0, 0] == pytest.approx(0.2317, abs=1e-4)
    _, lat_u0, _, _ = latencies(cell, cell_decision(cell, shares=(1.0, 0.0, 0.0)))
    assert np.all(lat_u0 == 0)


def test_energies_hand_values(cell):
    e_l, *_ = energies(cell, cell_decision(cell))
    assert e_l[0, 0] == pytest.approx(150.0, rel=1e-12)
    _, e_ut, e_uc, _, _, _ = energies(cell, cell_decision(cell, shares=(0.7, 0.3, 0.0)))
    assert e_uc[0, 0, 0] == pytest.approx(0.18, rel=1e-12)
    assert e_ut[0, 0] == pytest.approx(3 * 1.8e6 / RATE_3W, rel=1e-12)
    assert e_ut[0, 0] == pytest.approx(0.155, abs=1e-3)


def test_propulsion_hand_values(cell):
    traj = np.array([[[0.0, 0.0], [10.0, 0.0]]])
    v, e = propulsion(cell, cell_decision(cell, traj=traj))
    assert v[0, 1] == pytest.approx(10.0) and e[0, 0] == 0.0
    assert e[0, 1] == pytest.approx(7.7376, rel=1e-12)
    traj = np.array([[[0.0, 0.0], [50.0, 0.0]]])
    assert propulsion(cell, cell_decision(cell, traj=traj))[1][0, 1] == pytest.approx(767.5 + 15.976 / 50)
    traj = np.zeros((1, 2, 2))
    assert propulsion(cell, cell_decision(cell, traj=traj))[1][0, 1] == pytest.approx(0.00614e-3 + 159.76)


def test_objective_single_and_doubled(cell):
    single = cell.replace(num_slots=1, task_bits=np.array([[6e6]]), cycles_per_bit=np.array([[100.0]]))
    phi, _ = objective(single, cell_decision(single))
    assert phi == pytest.approx(4e4, rel=1e-12)
    phi2, _ = objective(cell, cell_decision(cell))
    assert phi2 == pytest.approx(8e4, rel=1e-12)


def test_zero_rate_path_is_infeasible(cell):
    with pytest.raises(InfeasibleDecision):
        evaluate(cell, cell_decision(cell, shares=(0.5, 0.5, 0.0), p_uav=0.0))


def test_speed_violation_residual(cell):
    traj = np.array([[[0.0, 0.0], [60.0, 0.0]]])
    s = cell.replace(uav_end=np.array([[60.0, 0.0]]))
    bad = [v for v in check_feasibility(s, cell_decision(s, traj=traj)) if v.tag == "speed"]
    assert len(bad) == 1 and bad[0].residual == pytest.approx(10.0)


def test_straight_line_at_half_speed_is_clean(desk, desk_start):
    assert not [v for v in check_feasibility(desk, desk_start) if v.tag == "speed"]


def test_separation_violation(desk, desk_start):
    traj = desk_start.trajectories.copy()
    traj[1, 3] = traj[0, 3]
    bad = [v for v in check_feasibility(desk, desk_start.copy(trajectories=traj)) if v.tag == "separation"]
    assert bad and bad[0].index == (0, 1, 3)


def test_initial_point_is_feasible(desk, desk_start):
    assert check_feasibility(desk, desk_start, 1e-9) == []


def test_decision_round_trip(desk_start):
    assert Decision.from_dict(desk_start.to_dict()) == desk_start


@hsettings(max_examples=40, deadline=None)
@given(st.floats(0.01, 3.0), st.floats(0.01, 3.0), st.floats(0.0, 200.0))
def test_rate_monotone_in_power_and_distance(p1, p2, dx):
    s = one_cell()
    lo, hi = sorted((p1, p2))
    traj = np.array([[[dx, 0.0], [dx, 0.0]]])
    r_lo = link_rates(s, cell_decision(s, p_uav=lo, traj=traj))[1]
    r_hi = link_rates(s, cell_decision(s, p_uav=hi, traj=traj))[1]
    assert np.all(r_hi >= r_lo)
    r_far = link_rates(s, cell_decision(s, p_uav=hi, traj=traj + 10.0))[1]
    assert np.all(r_far <= r_hi)


@hsettings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3).filter(lambda w: sum(w) > 1e-3),
       st.floats(1e8, 5e9), st.floats(1e8, 9e9))
def test_energy_terms_nonnegative_and_additive(w, f_l, f_u):
    s = one_cell()
    shares = np.asarray(w) / sum(w)
    e_l, e_ut, e_uc, e_st, e_sc, e_sum = energies(s, cell_decision(s, shares=shares, f_l=f_l, f_u=f_u))
    for e in (e_l, e_ut, e_uc, e_st, e_sc):
        assert np.all(e >= 0)
    assert np.allclose(e_sum, e_l + e_ut + e_uc.sum(axis=1) + e_st + e_sc, rtol=1e-14)
