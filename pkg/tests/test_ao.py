import numpy as np
import pytest

from sagin_mec.ao import RunReport, SchemeSpec, fit_shares, initial_point, run_ao
from sagin_mec.errors import InvalidArgument, NoFeasibleStart
from sagin_mec.model import check_feasibility
from sagin_mec.scenario import SolverSettings, generate_scenario, straight_line


@pytest.fixture(scope="module")
def runs(desk):
    return {sc: run_ao(desk, SchemeSpec(sc)) for sc in
            ("proposed", "single_uav", "fixed_trajectory", "fixed_allocation", "ls_offloading")}


def test_initial_point_feasible_at_eight_mus():
    s = generate_scenario(8, 2, 40, 1000, 7)
    d = initial_point(s)
    assert check_feasibility(s, d, 1e-9) == []


def test_initial_point_rejects_oversized_tasks(desk):
    s = desk.replace(task_bits=np.full_like(desk.task_bits, 1e9), max_power_uav_link=1e-30, max_power_leo_link=1e-30)
    with pytest.raises(NoFeasibleStart):
        initial_point(s)


def test_single_uav_start_associates_everyone():
    s = generate_scenario(4, 1, 8, 200, 1)
    assert np.all(initial_point(s).assoc[:, 0, :] == 1)


def test_fit_shares_respects_caps():
    caps = np.array([[[0.2, 0.5, 0.6]]])
    w = fit_shares((1 / 3, 1 / 3, 1 / 3), caps)
    assert np.all(w <= caps + 1e-12) and w.sum() == pytest.approx(1.0)
    with pytest.raises(NoFeasibleStart):
        fit_shares((1 / 3, 1 / 3, 1 / 3), np.full((1, 1, 3), 0.3))


def test_bad_scheme_rejected():
    with pytest.raises(InvalidArgument):
        SchemeSpec("greedy")
    with pytest.raises(InvalidArgument):
        SchemeSpec("fixed_allocation", fixed_shares=(0.5, 0.5, 0.5))


def test_proposed_converges_monotonically(runs):
    r = runs["proposed"]
    assert r.termination == "converged"
    tr = r.phi_trace
    assert all(b >= a * (1 - 1e-6) for a, b in zip(tr, tr[1:]))
    assert not any(rec.skipped for rec in r.records)


def test_every_scheme_is_feasible_and_monotone(desk, runs):
    for sc, r in runs.items():
        s = desk if r.scenario_uavs == desk.num_uavs else desk.replace(
            num_uavs=1, uav_start=desk.uav_start[:1], uav_end=desk.uav_end[:1], uav_bandwidth=desk.uav_bandwidth[:, :1])
        assert check_feasibility(s, r.decision, 1e-6) == [], sc
        tr = r.phi_trace
        assert all(b >= a * (1 - 1e-6) for a, b in zip(tr, tr[1:])), sc


def test_proposed_beats_ls_offloading(runs):
    assert runs["ls_offloading"].phi < runs["proposed"].phi


def test_scheme_definitions(desk, runs):
    assert np.array_equal(runs["fixed_trajectory"].decision.trajectories,
                          straight_line(desk.uav_start, desk.uav_end, desk.num_slots))
    assert np.all(runs["ls_offloading"].decision.offload[..., 1] == 0)
    assert runs["single_uav"].decision.assoc.shape[1] == 1
    start = initial_point(desk, SchemeSpec("fixed_allocation").fixed_shares)
    assert np.array_equal(runs["fixed_allocation"].decision.offload, start.offload)


def test_zero_iterations_report_start_only(desk):
    r = run_ao(desk, SchemeSpec(), SolverSettings(ao_max_iters=0))
    assert r.termination == "max_iters" and len(r.records) == 1 and r.iterations == 0


def test_report_round_trip(runs):
    r = runs["proposed"]
    back = RunReport.from_dict(r.to_dict())
    assert back == r and back.to_dict() == r.to_dict()
