"""Command-line front end: generate | solve | sweep | validate.

Exit codes: 0 success, 2 bad flags, 3 bad or infeasible scenario,
4 a run stopped on an infeasible subproblem (or every sweep row failed).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ao import SCHEMES, RunReport, SchemeSpec, run_ao, single_uav_scenario
from .errors import InvalidArgument, SaginError
from .model import Decision, check_feasibility, energies
from .scenario import Scenario, SolverSettings, dump_document, generate_scenario, load_document, validate_scenario

EXIT_OK, EXIT_USAGE, EXIT_SCENARIO, EXIT_INFEASIBLE = 0, 2, 3, 4
SWEEP_AXES = ("num_mus", "task_bits", "uav_bandwidth")

TRACE_COLUMNS = ["iter", "phi", "surrogate", "d_sp1", "d_sp2", "d_sp3", "d_sp4", "max_residual",
                 "ms_sp1", "ms_sp2", "ms_sp3", "ms_sp4"]
TRAJ_COLUMNS = ["k", "n", "x", "y"]
ALLOC_COLUMNS = ["m", "n", "omega_l", "omega_u", "omega_s", "assoc_k", "p_uav", "p_leo", "f_l", "f_u", "f_s"]
ENERGY_COLUMNS = ["m", "n", "e_local", "e_uav_tran", "e_uav_com", "e_leo_tran", "e_leo_com", "e_sum"]
SWEEP_COLUMNS = ["axis_value", "seed", "scheme", "phi", "total_energy_j", "mean_omega_l", "mean_omega_u",
                 "mean_omega_s", "iters", "wall_ms", "status"]


def fmt(v) -> str:
    """Cell text: integers as is, reals with 9 significant digits, None as empty."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------ tables

def trace_rows(report: RunReport):
    timings = report.timings or [{}] * len(report.records)
    for rec, ms in zip(report.records, timings):
        d = [rec.deltas.get(b) for b in ("sp1", "sp2", "sp3", "sp4")]
        t = [ms.get(b) for b in ("sp1", "sp2", "sp3", "sp4")]
        yield [rec.iteration, rec.phi, rec.surrogate, *d, rec.max_residual, *t]


def trajectory_rows(d: Decision):
    for k, path in enumerate(d.trajectories):
        for n, (x, y) in enumerate(path):
            yield [k, n, x, y]


def allocation_rows(d: Decision):
    M, K, N = d.assoc.shape
    for m in range(M):
        for n in range(N):
            k = int(np.argmax(d.assoc[m, :, n]))
            w = d.offload[m, n]
            yield [m, n, w[0], w[1], w[2], k, d.power_uav[m, k, n], d.power_leo[m, n],
                   d.freq_local[m, n], d.freq_uav[m, k, n], d.freq_leo[m, n]]


def energy_rows(s: Scenario, d: Decision):
    e_l, e_ut, e_uc, e_st, e_sc, e_sum = energies(s, d)
    e_uc = e_uc.sum(axis=1)
    for m in range(s.num_mus):
        for n in range(s.num_slots):
            yield [m, n, e_l[m, n], e_ut[m, n], e_uc[m, n], e_st[m, n], e_sc[m, n], e_sum[m, n]]


def run_json(report: RunReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=1)


def load_run(path) -> RunReport:
    return RunReport.from_dict(json.loads(Path(path).read_text()))


def write_run(out_dir: Path, s: Scenario, report: RunReport) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run.json").write_text(run_json(report))
    if report.scenario_uavs != s.num_uavs:          # the single-UAV baseline flies one UAV
        s = single_uav_scenario(s, report.scheme.single_uav_index)
    write_csv(out_dir / "trace.csv", TRACE_COLUMNS, trace_rows(report))
    write_csv(out_dir / "trajectories.csv", TRAJ_COLUMNS, trajectory_rows(report.decision))
    write_csv(out_dir / "allocation.csv", ALLOC_COLUMNS, allocation_rows(report.decision))
    write_csv(out_dir / "energy.csv", ENERGY_COLUMNS, energy_rows(s, report.decision))


# ------------------------------------------------------------------ commands

def _read_scenario(path):
    try:
        return load_document(Path(path).read_text())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InvalidArgument(f"cannot read scenario {path}: {exc}") from exc


def cmd_generate(args) -> int:
    try:
        s = generate_scenario(args.mus, args.uavs, args.slots, args.area, args.seed)
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    Path(args.out).write_text(dump_document(s, SolverSettings(rng_seed=args.seed)))
    return EXIT_OK


def cmd_solve(args) -> int:
    try:
        s, settings = _read_scenario(args.scenario)
        problems = validate_scenario(s)
        if problems:
            raise InvalidArgument("; ".join(problems))
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    changes = {}
    if args.eps is not None:
        changes["ao_tolerance"] = args.eps
    if args.max_iters is not None:
        changes["ao_max_iters"] = args.max_iters
    if args.seed is not None:
        changes["rng_seed"] = args.seed
    if args.distance_row is not None:
        changes["distance_row"] = args.distance_row
    try:
        settings = settings.replace(**changes)
        report = run_ao(s, SchemeSpec(args.scheme), settings)
    except SaginError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO if isinstance(exc, InvalidArgument) else EXIT_INFEASIBLE
    write_run(Path(args.out_dir), s, report)
    print(f"{args.scheme}: {report.termination} after {report.iterations} iterations, phi = {report.phi:.9g}")
    return EXIT_INFEASIBLE if report.termination == "infeasible_subproblem" else EXIT_OK


def cmd_validate(args) -> int:
    try:
        s, settings = _read_scenario(args.scenario)
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    problems = validate_scenario(s)
    if not problems and args.run:
        report = load_run(args.run)
        if report.scenario_uavs == s.num_uavs:
            problems = [str(v)
                        for v in check_feasibility(s, report.decision, settings.feasibility_tolerance,
                                                   settings.min_speed_floor)]
    for p in problems:
        print(p)
    if not problems:
        print("ok")
    return EXIT_SCENARIO if problems else EXIT_OK


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    seeds: tuple
    schemes: tuple

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise InvalidArgument(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not (self.values and self.seeds and self.schemes):
            raise InvalidArgument("values, seeds and schemes must be non-empty")
        if min(self.values) <= 0:
            raise InvalidArgument("sweep values must be positive")
        for sc in self.schemes:
            if sc not in SCHEMES:
                raise InvalidArgument(f"unknown scheme {sc!r}")


def sweep_scenario(base: dict, axis: str, value, seed: int) -> Scenario:
    """Scenario for one sweep row; ``base`` holds mus, uavs, slots, area."""
    mus = int(value) if axis == "num_mus" else base["mus"]
    overrides = {"uav_bandwidth": float(value)} if axis == "uav_bandwidth" else {}
    s = generate_scenario(mus, base["uavs"], base["slots"], base["area"], seed, **overrides)
    if axis == "task_bits":
        s = s.replace(task_bits=np.full_like(s.task_bits, float(value)))
    return s


def sweep_row(base: dict, axis: str, value, seed: int, scheme: str, settings: SolverSettings) -> list:
    t0 = time.perf_counter()
    try:
        s = sweep_scenario(base, axis, value, seed)
        report = run_ao(s, SchemeSpec(scheme), settings)
        if report.scenario_uavs != s.num_uavs:
            s = single_uav_scenario(s, report.scheme.single_uav_index)
        d = report.decision
        total = float(energies(s, d)[-1].sum())
        w = d.offload.reshape(-1, 3).mean(axis=0)
        phi, iters, status = report.phi, report.iterations, report.termination
    except SaginError as exc:
        total, w, phi, iters, status = None, (None,) * 3, None, None, f"{type(exc).__name__}: {exc}"
    ms = 1e3 * (time.perf_counter() - t0)
    return [value, seed, scheme, phi, total, *w, iters, ms, status]


def run_sweep(spec: SweepSpec, base: dict, settings: SolverSettings, workers: int = 1) -> list:
    jobs = [(base, spec.axis, v, seed, sc, settings)
            for v in spec.values for seed in spec.seeds for sc in spec.schemes]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(sweep_row, *zip(*jobs)))
    return [sweep_row(*j) for j in jobs]


def _csv_list(kind):
    def parse(text):
        try:
            return tuple(kind(v) for v in text.split(",") if v.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def cmd_sweep(args) -> int:
    try:
        values = args.values if args.axis != "num_mus" else tuple(int(v) for v in args.values)
        spec = SweepSpec(args.axis, values, args.seeds, args.schemes)
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    settings = SolverSettings()
    changes = {"ao_tolerance": args.eps} if args.eps is not None else {}
    if args.max_iters is not None:
        changes["ao_max_iters"] = args.max_iters
    if args.distance_row is not None:
        changes["distance_row"] = args.distance_row
    settings = settings.replace(**changes)
    base = {"mus": args.mus, "uavs": args.uavs, "slots": args.slots, "area": args.area}
    rows = run_sweep(spec, base, settings, args.workers)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    ok = [r for r in rows if r[3] is not None]
    print(f"{len(ok)}/{len(rows)} rows solved")
    return EXIT_OK if ok else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sagin-mec", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random scenario document")
    g.add_argument("--mus", type=int, required=True)
    g.add_argument("--uavs", type=int, required=True)
    g.add_argument("--slots", type=int, required=True)
    g.add_argument("--area", type=float, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run one scheme and write the run directory")
    s.add_argument("--scenario", required=True)
    s.add_argument("--scheme", choices=SCHEMES, default="proposed")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--eps", type=float)
    s.add_argument("--max-iters", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--distance-row", choices=("conservative", "tangent"))
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="run schemes over one axis and seeds")
    w.add_argument("--axis", choices=SWEEP_AXES, required=True)
    w.add_argument("--values", type=_csv_list(float), required=True)
    w.add_argument("--seeds", type=_csv_list(int), required=True)
    w.add_argument("--schemes", type=_csv_list(str), default=("proposed",))
    w.add_argument("--mus", type=int, default=4)
    w.add_argument("--uavs", type=int, default=2)
    w.add_argument("--slots", type=int, default=8)
    w.add_argument("--area", type=float, default=200.0)
    w.add_argument("--eps", type=float)
    w.add_argument("--max-iters", type=int)
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--distance-row", choices=("conservative", "tangent"))
    w.add_argument("--out-dir", required=True)
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="check a scenario document (and optionally a run.json)")
    v.add_argument("--scenario", required=True)
    v.add_argument("--run")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
