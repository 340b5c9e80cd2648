"""Config files, result export and the ``secrel`` command line.

Exports are deterministic: fixed column order, ``%.12g`` numbers, LF line
endings and sorted JSON keys, so re-exporting a solution is byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from .pipeline import (
    AlgorithmTrace,
    OracleBudgetError,
    circular_baseline,
    init_solution,
    run_algorithm1,
    tiny_oracle,
)
from .robust import sampled_worst_secrecy
from .scenario import (
    PowerSchedule,
    ScenarioConfig,
    ScenarioError,
    Trajectory,
    check_solution,
    evaluate_solution,
)

FMT = "%.12g"
EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2, 64
TRACE_COLUMNS = ("iteration", "ee_kbits_per_J", "lam", "energy_J", "secrecy_bits",
                 "block1_iters", "block2_iters", "violations")


# -- configuration -------------------------------------------------------

def load_config(path) -> ScenarioConfig:
    """Read a JSON scenario; absent keys take the packaged defaults.

    Raises :class:`ScenarioError` naming the line (syntax errors) or the
    offending field (unknown keys, wrong types, invariant violations).
    """
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}", "json") from None
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be a JSON object", "json")
    try:
        return ScenarioConfig.from_dict(data)
    except TypeError as exc:
        # malformed nested entries, e.g. an adversary with unknown keys
        raise ScenarioError(f"adversaries: {exc}", "adversaries") from None


def config_to_json(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2) + "\n"


def dump_config(cfg: ScenarioConfig, path) -> None:
    _write_text(path, config_to_json(cfg))


def config_hash(cfg: ScenarioConfig) -> str:
    """SHA-256 of the canonical JSON form of the config."""
    canon = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def env_seed(default: int = 0) -> int:
    value = os.environ.get("SECREL_SEED")
    return default if value in (None, "") else int(value)


# -- export --------------------------------------------------------------

def _write_text(path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (str, int, np.integer)) else FMT % v for v in row])


def _round(x: float) -> float:
    return float(FMT % x)


def export_results(solution: tuple[Trajectory, PowerSchedule], trace: AlgorithmTrace | None, out_dir,
                   cfg: ScenarioConfig, extra: dict | None = None) -> dict[str, Path]:
    """Write trajectory, powers, rates, trace and summary files to ``out_dir``.

    Returns the written paths keyed by file stem.
    """
    traj, pw = solution
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = evaluate_solution(traj, pw, cfg)
    n = np.arange(1, cfg.N + 1)
    paths = {k: out / f"{k}.csv" for k in ("trajectory", "powers", "rates", "trace")}
    paths["summary"] = out / "summary.json"

    _write_csv(paths["trajectory"], ["n", "x", "y", "v", "a"],
               zip(n, traj.pos[:, 0], traj.pos[:, 1], traj.speed, traj.accel))
    _write_csv(paths["powers"], ["n", "p_b", "p_u"], zip(n, pw.p_b, pw.p_u))
    adv_cols = [f"r_a{i + 1}" for i in range(len(rep.r_a))]
    _write_csv(paths["rates"], ["n", "r_b", "r_u", *adv_cols, "r"],
               zip(n, rep.r_b, rep.r_u, *rep.r_a, rep.secrecy))
    rows = trace.rows if trace is not None else []
    _write_csv(paths["trace"], TRACE_COLUMNS, ([r[c] for c in TRACE_COLUMNS] for r in rows))

    summary = {
        "config_hash": config_hash(cfg),
        "config": cfg.to_dict(),
        "slots": cfg.N,
        "totals": {
            "sum_r_b": _round(rep.r_b.sum()),
            "sum_r_u": _round(rep.r_u.sum()),
            "sum_secrecy": _round(rep.secrecy_sum),
            "sum_power_W": _round(rep.power_sum),
            "secrecy_bits": _round(rep.secrecy_bits),
            "energy_J": _round(rep.energy_J),
            "ee_kbits_per_J": _round(rep.ee_kbits_per_J),
        },
        "converged": bool(trace.converged) if trace is not None else None,
        "message": trace.message if trace is not None else "",
        "outer_iterations": max(len(rows) - 1, 0),
        "violations": check_solution(traj, pw, cfg),
    }
    if extra:
        summary.update(extra)
    _write_text(paths["summary"], json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return paths


def load_solution(path) -> tuple[Trajectory, PowerSchedule]:
    """Read trajectory.csv and powers.csv from a result directory (or one of its files)."""
    d = Path(path)
    if d.is_file():
        d = d.parent
    t = np.loadtxt(d / "trajectory.csv", delimiter=",", skiprows=1, ndmin=2)
    p = np.loadtxt(d / "powers.csv", delimiter=",", skiprows=1, ndmin=2)
    return Trajectory(t[:, 1:3], t[:, 3], t[:, 4]), PowerSchedule(p[:, 1], p[:, 2])


# -- command line --------------------------------------------------------

class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="secrel", description="Robust energy-efficient UAV relay optimization.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def with_config(sp):
        sp.add_argument("--config", help="scenario JSON (defaults when omitted)")
        return sp

    o = with_config(sub.add_parser("optimize", help="run the alternating optimization"))
    o.add_argument("--out", required=True, help="output directory")
    o.add_argument("--max-outer", type=int, default=25)
    o.add_argument("--quiet", action="store_true")

    b = with_config(sub.add_parser("baseline", help="best constant-speed circle"))
    b.add_argument("--out", help="output directory")

    s = with_config(sub.add_parser("sweep", help="optimize once per parameter value"))
    s.add_argument("--param", required=True, help="'radius'/'R' (all adversaries) or a numeric config field")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--max-outer", type=int, default=25)

    v = with_config(sub.add_parser("validate", help="re-check a stored solution"))
    v.add_argument("--solution", required=True, help="result directory or one of its CSV files")

    r = with_config(sub.add_parser("oracle", help="exhaustive search on a tiny instance (N <= 4)"))
    r.add_argument("--grid", type=int, default=5, help="positions per axis around the initial path")
    r.add_argument("--spacing", type=float, default=20.0, help="grid spacing in m")
    r.add_argument("--speeds", type=int, default=5, help="speed levels in [v_min, v_max]")
    r.add_argument("--levels", type=int, default=3, help="power levels per link")
    r.add_argument("--out", help="output directory")
    return p


def _config(args) -> ScenarioConfig:
    return load_config(args.config) if args.config else ScenarioConfig.from_dict({})


def _sampled_wcsr(traj, pw, cfg, seed) -> float:
    return float(sampled_worst_secrecy(traj.pos, pw.p_u, cfg, seed=seed)[1:].sum())


def _cmd_optimize(args) -> int:
    cfg = _config(args)
    seed = env_seed()
    log = None if args.quiet else (lambda row: print(
        f"iter {row['iteration']:2d}  EE {row['ee_kbits_per_J']:.6g} kbits/J  lam {row['lam']:.6g}"))
    traj, pw, trace = run_algorithm1(cfg, max_outer=args.max_outer, log=log)
    extra = {"seed": seed, "sampled_worst_secrecy": _round(_sampled_wcsr(traj, pw, cfg, seed))}
    export_results((traj, pw), trace, args.out, cfg, extra)
    problems = check_solution(traj, pw, cfg)
    print(f"EE {trace.ee[-1]:.6g} kbits/J after {len(trace.rows) - 1} outer iterations; results in {args.out}")
    if problems:
        print("\n".join(problems), file=sys.stderr)
        return EXIT_INVALID
    if trace.message:
        print(f"solver failure: {trace.message}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_baseline(args) -> int:
    cfg = _config(args)
    res = circular_baseline(cfg)
    print(f"circle radius {res.radius:.6g} m, speed {res.speed:.6g} m/s: EE {res.ee_kbits_per_J:.6g} kbits/J")
    if args.out:
        export_results((res.traj, res.pw), None, args.out, cfg,
                       {"radius": _round(res.radius), "speed": _round(res.speed)})
    return EXIT_OK


def _sweep_config(cfg: ScenarioConfig, param: str, value: float) -> ScenarioConfig:
    if param in ("radius", "R", "radius_R"):
        return cfg.with_radii(value)
    data = cfg.to_dict()
    if param not in data or isinstance(data[param], (list, dict)):
        raise ScenarioError(f"cannot sweep {param!r}", param)
    data[param] = int(value) if param == "slots_N" else value
    return ScenarioConfig.from_dict(data)


def _sweep_one(job):
    cfg, max_outer, seed = job
    traj, pw, trace = run_algorithm1(cfg, max_outer=max_outer)
    wcsr = [_sampled_wcsr(t, p, cfg, seed) for t, p in trace.solutions]
    return traj, pw, trace, wcsr


def _cmd_sweep(args) -> int:
    cfg = _config(args)
    seed = env_seed()
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise _UsageError(f"--values must be comma-separated numbers, got {args.values!r}") from None
    cfgs = [_sweep_config(cfg, args.param, v) for v in values]
    jobs = [(c, args.max_outer, seed) for c in cfgs]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, status = [], EXIT_OK
    for value, c, (traj, pw, trace, wcsr) in zip(values, cfgs, results):
        run_dir = out / f"{args.param}={value:g}"
        export_results((traj, pw), trace, run_dir, c, {"seed": seed, "sampled_worst_secrecy": _round(wcsr[-1])})
        for row, w in zip(trace.rows, wcsr):
            rows.append((FMT % value, row["iteration"], row["ee_kbits_per_J"], w))
        print(f"{args.param}={value:g}: EE {trace.ee[-1]:.6g} kbits/J, sampled worst-case secrecy {wcsr[-1]:.6g}")
        if check_solution(traj, pw, c):
            status = max(status, EXIT_INVALID)
        elif trace.message:
            status = max(status, EXIT_SOLVER)
    _write_csv(out / "sweep.csv", ["value", "iteration", "ee_kbits_per_J", "sampled_worst_secrecy"], rows)
    return status


def _cmd_validate(args) -> int:
    path = Path(args.solution)
    summary = (path if path.is_dir() else path.parent) / "summary.json"
    if args.config:
        cfg = load_config(args.config)
    elif summary.exists():
        cfg = ScenarioConfig.from_dict(json.loads(summary.read_text())["config"])
    else:
        cfg = ScenarioConfig.from_dict({})
    try:
        traj, pw = load_solution(path)
    except (OSError, ValueError) as exc:
        print(f"cannot read solution: {exc}", file=sys.stderr)
        return EXIT_INVALID
    problems = check_solution(traj, pw, cfg)
    for line in problems:
        print(line)
    if problems:
        return EXIT_INVALID
    print(f"ok: EE {evaluate_solution(traj, pw, cfg).ee_kbits_per_J:.6g} kbits/J")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    cfg = _config(args)
    if cfg.N > 4:
        raise _UsageError(f"oracle needs slots_N <= 4, config has {cfg.N}")
    base, _ = init_solution(cfg)
    off = (np.arange(args.grid) - (args.grid - 1) / 2) * args.spacing
    dx, dy = np.meshgrid(off, off)
    offsets = np.column_stack([dx.ravel(), dy.ravel()])
    grids = [p + offsets for p in base.pos]
    speeds = np.linspace(cfg.v_min, cfg.v_max, args.speeds)
    res = tiny_oracle(cfg, grids, speeds, np.linspace(0, cfg.p_b_max, args.levels),
                      np.linspace(0, cfg.p_u_max, args.levels))
    print(f"oracle EE {res.ee_kbits_per_J + 0.0:.6g} kbits/J over {res.combinations} evaluations")
    if args.out:
        export_results((res.traj, res.pw), None, args.out, cfg)
    return EXIT_OK


COMMANDS = {"optimize": _cmd_optimize, "baseline": _cmd_baseline, "sweep": _cmd_sweep,
            "validate": _cmd_validate, "oracle": _cmd_oracle}


def run_cli(argv: Sequence[str] | None = None) -> int:
    """Entry point; returns the process exit code.

    0 success, 1 invalid config or solution, 2 solver failure, 64 usage error.
    """
    parser = _parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.error("a command is required")
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except ScenarioError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OracleBudgetError as exc:
        print(f"oracle failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run_cli())
