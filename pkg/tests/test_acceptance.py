"""Acceptance criteria 1-11. Each test prints one PASS/FAIL line (also repeated in the run summary)."""
import time

import numpy as np
import pytest

import sagin_mec.sp_power_freq as spf
import sagin_mec.sp_trajectory as spt
from oracles import enumerate_association, grid_offload_minimum
from sagin_mec import cli
from sagin_mec.ao import SCHEMES, SchemeSpec, initial_point, run_ao
from sagin_mec.errors import InfeasibleAssociation
from sagin_mec.fp import surrogate_value, update_weights
from sagin_mec.model import check_feasibility, energies, objective, speeds
from sagin_mec.optim import check_gradients
from sagin_mec.scenario import SolverSettings, dump_document, generate_scenario, straight_line
from sagin_mec.sp_association import assign, build_association_costs
from sagin_mec.sp_offload import path_coefficients, solve_offload_lp
from sagin_mec.sp_power_freq import PowerFreqProblem, g, power_from_xi, xi_from_power

RESULTS = {}
SEEDS = (1, 2, 3, 4, 5)


def report(n, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def desk_runs():
    """Proposed scheme on the five desk scenarios, recording every SP3 and SP4 output."""
    kkt, sca = [], []
    real_pf, real_sca = spf.solve_power_freq, spt.sca_solve

    def pf(*args, **kw):
        d, aux = real_pf(*args, **kw)
        kkt.append(aux.kkt_residual)
        return d, aux

    def sc(s, d, y, settings=None, joint=None):
        nd, rep = real_sca(s, d, y, settings, joint)
        sca.append((s, d, nd, rep, y))
        return nd, rep

    spf.solve_power_freq, spt.sca_solve = pf, sc
    try:
        runs = []
        for seed in SEEDS:
            s = generate_scenario(4, 2, 8, 200, seed)
            t0 = time.perf_counter()
            r = run_ao(s, SchemeSpec("proposed"), SolverSettings())
            runs.append((s, r, time.perf_counter() - t0))
    finally:
        spf.solve_power_freq, spt.sca_solve = real_pf, real_sca
    return runs, kkt, sca


def test_criterion_01_ao_monotone_and_converges(desk_runs):
    runs, _, _ = desk_runs
    ok, notes = True, []
    for s, r, secs in runs:
        tr = r.phi_trace
        mono = all(b >= a * (1 - 1e-6) for a, b in zip(tr, tr[1:]))
        last = abs(tr[-1] - tr[-2]) / max(1.0, abs(tr[-2]))
        good = mono and r.termination == "converged" and last < 1e-3 and r.iterations <= 50 and secs <= 300
        ok &= good
        notes.append(f"{r.iterations} it/{secs:.1f}s")
    report(1, ok, "5 desk seeds: Phi non-decreasing, converged (" + ", ".join(notes) + ")")


def random_feasible_decisions(count):
    rng = np.random.default_rng(11)
    out = []
    while len(out) < count:
        M, N = int(rng.integers(1, 5)), int(rng.integers(4, 9))
        s = generate_scenario(M, 2, N, 150, int(rng.integers(1 << 30)))
        shares = rng.dirichlet(np.ones(3))
        d = initial_point(s, tuple(shares))
        d = d.copy(power_uav=d.power_uav * rng.uniform(0.2, 2.0, d.power_uav.shape),
                   power_leo=d.power_leo * rng.uniform(0.2, 2.0, d.power_leo.shape),
                   freq_local=d.freq_local * rng.uniform(0.3, 1.0, d.freq_local.shape))
        if not check_feasibility(s, d):
            out.append((s, d))
    return out


def test_criterion_02_quadratic_transform_identity():
    worst = 0.0
    for s, d in random_feasible_decisions(100):
        phi = objective(s, d)[0]
        worst = max(worst, abs(surrogate_value(s, d, update_weights(s, d)) - phi) / phi)
    report(2, worst <= 1e-9, f"100 random feasible decisions, worst relative gap {worst:.2e} <= 1e-9")


def test_criterion_03_association_matches_enumeration():
    rng = np.random.default_rng(3)
    mismatches = 0
    for i in range(10):
        M = int(rng.integers(2, 5))
        s = generate_scenario(M, 2, 4, 150, 100 + i)
        d = initial_point(s, tuple(rng.dirichlet(np.ones(3))))
        y = update_weights(s, d)
        costs = build_association_costs(s, d, y)
        # A tighter UAV frequency cap so the capacity rows can bind.
        cap = s.uav_max_freq * rng.uniform(0.3, 1.0)
        budget = np.full(2, s.uav_energy_budget)
        best = enumerate_association(costs.cost, costs.feasible, costs.freq, costs.compute_energy, cap, budget)
        try:
            _, got = assign(costs, cap, budget)
        except InfeasibleAssociation:
            got = np.inf
        mismatches += not (got == best or abs(got - best) <= 1e-12 * max(1.0, abs(best)))
    report(3, mismatches == 0, f"10 instances (M<=4, K=2, N=4): BnB equals 2^(MN) enumeration, {mismatches} mismatches")


def test_criterion_04_offload_lp_against_grid():
    worst_low, worst_high = 0.0, 0.0
    for seed in range(10):
        s = generate_scenario(1, 1, 2, 10, 200 + seed)
        rng = np.random.default_rng(seed)
        d = initial_point(s)
        d = d.copy(power_uav=d.power_uav * rng.uniform(0.05, 2.0), power_leo=d.power_leo * rng.uniform(0.05, 2.0),
                   freq_local=d.freq_local * rng.uniform(0.3, 1.0), freq_uav=d.freq_uav * rng.uniform(0.5, 9.0),
                   freq_leo=d.freq_leo * rng.uniform(0.5, 9.0))
        y = update_weights(s, d)
        W, caps = path_coefficients(s, d)
        lp = float(np.sum(y[..., None] ** 2 * W * solve_offload_lp(s, d, y, SolverSettings()).offload))
        grid = grid_offload_minimum(W, caps, y)
        worst_low = max(worst_low, (lp - grid) / grid)
        worst_high = max(worst_high, (grid - lp) / grid)
    ok = worst_low <= 1e-9 and worst_high <= 0.02
    report(4, ok, f"10 tiny instances: LP <= grid (excess {worst_low:.1e}) and within 2% (gap {worst_high:.2%})")


def test_criterion_05_power_frequency_numerics(desk_runs):
    _, kkt, _ = desk_runs
    worst_kkt = max(kkt)
    rng = np.random.default_rng(5)
    grad_err = 0.0
    for i in range(20):
        s = generate_scenario(3, 2, 6, 150, 300 + i)
        d = initial_point(s, tuple(rng.dirichlet(np.ones(3) * 2)))
        prob = PowerFreqProblem(s, d, update_weights(s, d), SolverSettings())
        # The start sits on the frequency caps, so move every coordinate slightly inward.
        u, step = rng.uniform(0.2, 1, prob.n), 1e-2
        x = prob.program.x0 * (1 - step * u)
        while not np.all(np.concatenate([b.value(x) for b in prob.program.constraints]) < 0):
            step /= 2
            assert step > 1e-8, "no strictly interior point near the start"
            x = prob.program.x0 * (1 - step * u)
        grad_err = max(grad_err, check_gradients(prob.program, [x]))
    p = np.logspace(-9, np.log10(3.0), 2000)
    trip = max(float(np.max(np.abs(power_from_xi(xi_from_power(p, h, 1e-20), h, 1e-20) - p) / p))
               for h in (1e-12, 1e-10, 1e-8))
    ok = worst_kkt < 1e-6 and grad_err < 1e-4 and trip < 1e-10
    report(5, ok, f"KKT max {worst_kkt:.1e} over {len(kkt)} solves; gradient error {grad_err:.1e} at 20 points; "
                  f"power round trip {trip:.1e}")


def test_criterion_06_curvature_signs():
    rng = np.random.default_rng(6)
    p = np.linspace(3.0 / 400, 3.0, 400)
    concave_bad = 0
    for B in 10 ** rng.uniform(-3, 12, 500):
        f = p * np.log(2) / np.log1p(B * p)
        concave_bad += int(np.sum(f[2:] - 2 * f[1:-1] + f[:-2] > 0))
    xi = np.logspace(-3, 3, 1000)
    lg = np.log(xi) + 1 / xi + np.log(-np.expm1(-1 / xi))          # log g(xi), overflow-free
    convex_bad = int(np.sum(~(np.logaddexp(lg[:-2], lg[2:]) > np.log(2) + lg[1:-1])))
    small = xi > 2e-3                                                  # direct evaluation where g is finite
    gd = g(xi[small])
    convex_bad += int(np.sum(~(gd[2:] - 2 * gd[1:-1] + gd[:-2] > 0)))
    report(6, concave_bad == 0 and convex_bad == 0,
           f"energy per bit concave in p ({concave_bad} exceptions), xi(e^(1/xi)-1) convex ({convex_bad} exceptions)")


def test_criterion_07_sca_safety(desk_runs):
    _, _, sca = desk_runs
    steps = bad = 0
    for s, d, nd, rep, y in sca:
        for st in rep.steps:
            if st.accepted:
                steps += 1
                bad += st.tran_after > st.tran_before * (1 + 1e-12)
        q = nd.trajectories
        bad += not (np.array_equal(q[:, 0], s.uav_start) and np.array_equal(q[:, -1], s.uav_end))
        bad += speeds(s, q).max() > s.max_uav_speed + 1e-9
        for k in range(s.num_uavs):
            for i in range(k + 1, s.num_uavs):
                bad += np.linalg.norm(q[k] - q[i], axis=-1).min() < s.min_uav_separation - 1e-6
    report(7, bad == 0 and steps > 0,
           f"{steps} accepted SCA steps on 5 seeds: transmit energy non-increasing, endpoints, speed, separation "
           f"({bad} violations)")


def test_criterion_08_scheme_ordering():
    wins, rows = 0, []
    for seed in SEEDS:
        s = generate_scenario(8, 2, 20, 500, seed)
        phi = {sc: run_ao(s, SchemeSpec(sc)).phi for sc in SCHEMES}
        best = all(phi["proposed"] >= phi[sc] for sc in SCHEMES)
        wins += best
        rows.append(f"seed {seed}: {'ok' if best else 'no'}")
    report(8, wins >= 4, f"proposed Phi >= every baseline on {wins}/5 seeds at M=8, K=2, N=20 ({', '.join(rows)})")


def test_criterion_09_bandwidth_direction():
    good = 0
    for seed in SEEDS:
        out = []
        for bw in (1e6, 2e6):
            s = generate_scenario(8, 2, 20, 500, seed, uav_bandwidth=bw)
            r = run_ao(s, SchemeSpec("proposed"))
            out.append((r.decision.offload[..., 1].mean(), energies(s, r.decision)[-1].sum()))
        good += out[1][0] > out[0][0] and out[1][1] <= out[0][1]
    report(9, good >= 4, f"1 MHz -> 2 MHz raises mean omega_U and lowers total energy on {good}/5 seeds")


def test_criterion_10_trajectory_toward_cluster():
    s = generate_scenario(4, 2, 8, 200, 11)
    rng = np.random.default_rng(0)
    cluster = np.array([100.0, 185.0]) + rng.normal(0, 8, (4, 2))
    s = s.replace(mu_positions=cluster)
    r = run_ao(s, SchemeSpec("proposed"))
    centre = cluster.mean(axis=0)
    opt = np.linalg.norm(r.decision.trajectories - centre, axis=-1).mean()
    base = np.linalg.norm(straight_line(s.uav_start, s.uav_end, s.num_slots) - centre, axis=-1).mean()
    report(10, opt < base, f"mean distance to the MU cluster {opt:.2f} m optimised vs {base:.2f} m straight line")


def test_criterion_11_run_json_is_byte_identical(tmp_path):
    scen = tmp_path / "s.json"
    scen.write_text(dump_document(generate_scenario(4, 2, 8, 200, 7)))
    blobs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        assert cli.main(["solve", "--scenario", str(scen), "--out-dir", str(out)]) == 0
        blobs.append((out / "run.json").read_bytes())
    report(11, blobs[0] == blobs[1], f"two identical solves give byte-identical run.json ({len(blobs[0])} bytes)")
