
import pytest

from sagin_mec import cli
from sagin_mec.ao import RunReport
from sagin_mec.scenario import load_document, straight_line

TRACE, TRAJ, ALLOC, ENERGY = cli.TRACE_COLUMNS, cli.TRAJ_COLUMNS, cli.ALLOC_COLUMNS, cli.ENERGY_COLUMNS


@pytest.fixture(scope="module")
def scenario_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("scn") / "s.json"
    assert cli.main(["generate", "--mus", "4", "--uavs", "2", "--slots", "8", "--area", "200", "--seed", "7",
                     "--out", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def solved(scenario_file, tmp_path_factory):
    out = {}
    for sc in ("proposed", "fixed_trajectory", "ls_offloading"):
        d = tmp_path_factory.mktemp(sc)
        assert cli.main(["solve", "--scenario", str(scenario_file), "--scheme", sc, "--out-dir", str(d)]) == 0
        out[sc] = d
    return out


def test_generate_table_scenario(tmp_path, capsys):
    path = tmp_path / "s.json"
    assert cli.main(["generate", "--mus", "8", "--uavs", "2", "--slots", "40", "--area", "1000", "--seed", "7",
                     "--out", str(path)]) == 0
    assert cli.main(["validate", "--scenario", str(path)]) == 0
    assert "ok" in capsys.readouterr().out


def test_missing_out_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["generate", "--mus", "8", "--uavs", "2", "--slots", "40", "--area", "1000", "--seed", "7"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_unreachable_endpoints_exit_3(tmp_path, capsys):
    code = cli.main(["generate", "--mus", "8", "--uavs", "2", "--slots", "1", "--area", "1000", "--seed", "7",
                     "--out", str(tmp_path / "x.json")])
    assert code == 3 and "max_uav_speed" in capsys.readouterr().err


def test_unreadable_scenario_exit_3(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["solve", "--scenario", str(bad), "--out-dir", str(tmp_path / "r")]) == 3
    assert cli.main(["solve", "--scenario", str(tmp_path / "missing.json"), "--out-dir", str(tmp_path / "r")]) == 3


def test_csv_schemas(solved):
    d = solved["proposed"]
    for name, cols in (("trace.csv", TRACE), ("trajectories.csv", TRAJ), ("allocation.csv", ALLOC),
                       ("energy.csv", ENERGY)):
        header = (d / name).read_text().splitlines()[0]
        assert header == ",".join(cols)


def test_trace_phi_non_decreasing(solved):
    phi = [float(r["phi"]) for r in cli.read_csv(solved["proposed"] / "trace.csv")]
    assert len(phi) >= 2
    assert all(b >= a * (1 - 1e-6) for a, b in zip(phi, phi[1:]))


def test_fixed_trajectory_rows_are_straight(scenario_file, solved):
    s, _ = load_document(scenario_file.read_text())
    rows = cli.read_csv(solved["fixed_trajectory"] / "trajectories.csv")
    q = straight_line(s.uav_start, s.uav_end, s.num_slots)
    expect = [[k, n, float(f"{q[k, n, 0]:.9g}"), float(f"{q[k, n, 1]:.9g}")] for k in range(2) for n in range(8)]
    got = [[int(r["k"]), int(r["n"]), float(r["x"]), float(r["y"])] for r in rows]
    assert got == expect


def test_ls_offloading_has_no_uav_share(solved):
    rows = cli.read_csv(solved["ls_offloading"] / "allocation.csv")
    assert all(float(r["omega_u"]) == 0.0 for r in rows)


def test_nine_significant_digits():
    assert cli.fmt(1 / 3) == "0.333333333"
    assert cli.fmt(123456789012.0) == "1.23456789e+11"
    assert cli.fmt(7) == "7" and cli.fmt(None) == ""


def test_run_json_round_trip_and_determinism(scenario_file, solved, tmp_path):
    text = (solved["proposed"] / "run.json").read_text()
    report = cli.load_run(solved["proposed"] / "run.json")
    assert isinstance(report, RunReport)
    assert cli.run_json(report) == text
    assert cli.main(["solve", "--scenario", str(scenario_file), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "run.json").read_bytes() == text.encode()


def test_validate_run(scenario_file, solved):
    assert cli.main(["validate", "--scenario", str(scenario_file), "--run",
                     str(solved["proposed"] / "run.json")]) == 0


def test_solve_with_tangent_distance_row(scenario_file, tmp_path):
    out = tmp_path / "tangent"
    assert cli.main(["solve", "--scenario", str(scenario_file), "--distance-row", "tangent",
                     "--out-dir", str(out)]) == 0
    assert cli.main(["validate", "--scenario", str(scenario_file), "--run", str(out / "run.json")]) == 0


def test_infeasible_subproblem_exit_4(scenario_file, tmp_path, monkeypatch):
    real = cli.run_ao

    def stuck(*args, **kw):
        r = real(*args, **kw)
        r.termination = "infeasible_subproblem"
        return r

    monkeypatch.setattr(cli, "run_ao", stuck)
    args = ["solve", "--scenario", str(scenario_file), "--out-dir", str(tmp_path), "--max-iters", "1"]
    assert cli.main(args) == 4


def sweep(tmp_path, axis, values, schemes="proposed", seeds="1"):
    assert cli.main(["sweep", "--axis", axis, "--values", values, "--seeds", seeds, "--schemes", schemes,
                     "--out-dir", str(tmp_path)]) == 0
    rows = cli.read_csv(tmp_path / "sweep.csv")
    assert list(rows[0]) == cli.SWEEP_COLUMNS
    return rows


def test_sweep_bandwidth_raises_uav_share(tmp_path):
    rows = sweep(tmp_path, "uav_bandwidth", "1e6,2e6")
    assert float(rows[1]["mean_omega_u"]) > float(rows[0]["mean_omega_u"])


def test_sweep_more_mus_more_efficiency(tmp_path):
    rows = sweep(tmp_path, "num_mus", "4,8")
    assert float(rows[1]["phi"]) > float(rows[0]["phi"])


def test_sweep_more_bits_more_energy(tmp_path):
    schemes = "proposed,single_uav,fixed_trajectory,fixed_allocation,ls_offloading"
    rows = sweep(tmp_path, "task_bits", "4e6,6e6", schemes)
    by = {(r["scheme"], float(r["axis_value"])): float(r["total_energy_j"]) for r in rows}
    for sc in schemes.split(","):
        assert by[(sc, 6e6)] > by[(sc, 4e6)], sc


def test_sweep_rejects_bad_axis(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--axis", "height", "--values", "1", "--seeds", "1", "--out-dir", str(tmp_path)])
    assert cli.main(["sweep", "--axis", "task_bits", "--values", "-1", "--seeds", "1",
                     "--out-dir", str(tmp_path)]) == 2
