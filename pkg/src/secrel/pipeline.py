"""Alternating optimization, initialization, baselines and a brute-force oracle."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .power_speed import solve_power_speed
from .scenario import (
    PowerSchedule,
    ScenarioConfig,
    ScenarioError,
    SolutionReport,
    Trajectory,
    channel_gain,
    check_solution,
    evaluate_solution,
    kinetic_deltas,
    propulsion_power,
    segment_lengths,
    trim_to_causality,
    worstcase_gains,
)
from .traj_accel import solve_traj_accel


def _flat_powers(cfg: ScenarioConfig) -> PowerSchedule:
    p_b = np.full(cfg.N, cfg.p_b_avg)
    p_u = np.full(cfg.N, cfg.p_u_avg)
    p_b[-1] = 0.0
    p_u[0] = 0.0
    return PowerSchedule(p_b, p_u)


def init_solution(cfg: ScenarioConfig) -> tuple[Trajectory, PowerSchedule]:
    """Straight BS-to-user flight at constant speed with flat powers.

    The speed is max(v_min, length / T).  When the BS sits above the user
    the UAV instead circles the BS once at v_min.  Powers are the averages,
    zero at the endpoints, then lowered to respect information causality.
    """
    bs = np.asarray(cfg.bs_pos)
    user = np.asarray(cfg.user_pos)
    length = float(np.linalg.norm(user - bs))
    rho, N = cfg.slot_len, cfg.N
    if length > cfg.v_max * cfg.horizon_T:
        raise ScenarioError(
            f"BS-user segment of {length:.6g} m needs horizon_T >= {length / cfg.v_max:.6g} s at v_max",
            "horizon_T",
        )
    if length > 0:
        v = max(cfg.v_min, length / cfg.horizon_T)
        s = np.minimum(np.arange(N) * rho * v, length)
        pos = bs + np.outer(s, (user - bs) / length)
        accel = np.zeros(N)
        accel[:-1] = 2.0 * (segment_lengths(pos) - rho * v) / rho ** 2
    else:
        v = cfg.v_min
        r = v * cfg.horizon_T / (2 * np.pi)
        ang = 2 * np.pi * np.arange(N) / N
        pos = bs + r * np.column_stack([np.cos(ang), np.sin(ang)])
        accel = np.zeros(N)
        accel[:-1] = 2.0 * (segment_lengths(pos) - rho * v) / rho ** 2
    traj = Trajectory(pos, np.full(N, v), accel)
    return traj, trim_to_causality(traj, _flat_powers(cfg), cfg)


@dataclass
class AlgorithmTrace:
    """Per-outer-iteration record; row 0 is the initialization."""

    rows: list[dict] = field(default_factory=list)
    converged: bool = False
    message: str = ""
    blocks: list = field(default_factory=list)  # (power/speed, trajectory) BlockResults
    solutions: list = field(default_factory=list)  # (traj, pw) per row

    def column(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.rows])

    @property
    def ee(self) -> np.ndarray:
        return self.column("ee_kbits_per_J")

    def monotone(self, rel_tol: float = 1e-6) -> bool:
        ee = self.ee
        return bool(np.all(np.diff(ee) >= -rel_tol * (1 + np.abs(ee[:-1]))))


def _row(it, traj, pw, cfg, lam, it1, it2, t0) -> dict:
    rep = evaluate_solution(traj, pw, cfg)
    viol = check_solution(traj, pw, cfg)
    from .scenario import mobility_residual

    return dict(
        iteration=it,
        ee_kbits_per_J=rep.ee_kbits_per_J,
        lam=lam,
        secrecy_bits=rep.secrecy_bits,
        energy_J=rep.energy_J,
        block1_iters=it1,
        block2_iters=it2,
        max_residual=float(np.max(np.abs(mobility_residual(traj, cfg)))),
        violations=len(viol),
        wall_time=time.perf_counter() - t0,
    )


def run_algorithm1(cfg: ScenarioConfig, *, max_outer: int = 25, rel_tol: float = 1e-3,
                   init: tuple[Trajectory, PowerSchedule] | None = None,
                   backend: str = "clarabel", log: Callable[[dict], None] | None = None
                   ) -> tuple[Trajectory, PowerSchedule, AlgorithmTrace]:
    """Alternate the power/speed and trajectory blocks until EE stalls.

    Stops when the relative EE gain of an outer iteration drops below
    ``rel_tol``.  Each block returns its best candidate, so the EE sequence
    never decreases.  A block failure ends the run with the best solution
    so far and ``trace.converged = False``.
    """
    t0 = time.perf_counter()
    traj, pw = init if init is not None else init_solution(cfg)
    trace = AlgorithmTrace()
    lam = evaluate_solution(traj, pw, cfg).ratio
    trace.rows.append(_row(0, traj, pw, cfg, lam, 0, 0, t0))
    trace.solutions.append((traj, pw))
    if log:
        log(trace.rows[-1])
    for it in range(1, max_outer + 1):
        prev = trace.rows[-1]["ee_kbits_per_J"]
        b1 = solve_power_speed(traj, pw, cfg, backend=backend)
        b2 = solve_traj_accel(b1.traj, b1.pw, cfg, backend=backend)
        trace.blocks.append((b1, b2))
        traj, pw = b2.traj, b2.pw
        trace.rows.append(_row(it, traj, pw, cfg, b2.lam, b1.iterations, b2.iterations, t0))
        trace.solutions.append((traj, pw))
        if log:
            log(trace.rows[-1])
        failure = b1.message if b1.message and "no improvement" not in b1.message else b2.message
        if failure:
            trace.message = failure
            break
        ee = trace.rows[-1]["ee_kbits_per_J"]
        if ee - prev < rel_tol * abs(prev):
            trace.converged = True
            break
    problems = check_solution(traj, pw, cfg)
    if problems:
        trace.converged = False
        trace.message = "; ".join(problems)
    return traj, pw, trace


@dataclass
class BaselineResult:
    traj: Trajectory
    pw: PowerSchedule
    ee_kbits_per_J: float
    radius: float
    speed: float
    score: float
    evaluated: int


def circle_path(cfg: ScenarioConfig, center, radius: float, speed: float, start_angle: float = 0.0) -> Trajectory:
    """Constant-speed circle; accelerations make the chords exact."""
    rho, N = cfg.slot_len, cfg.N
    ang = start_angle + np.arange(N) * rho * speed / radius
    pos = np.asarray(center) + radius * np.column_stack([np.cos(ang), np.sin(ang)])
    accel = np.zeros(N)
    accel[:-1] = 2.0 * (segment_lengths(pos) - rho * speed) / rho ** 2
    return Trajectory(pos, np.full(N, speed), accel)


def circular_baseline(cfg: ScenarioConfig, *, radii: Sequence[float] | None = None,
                      speeds: Sequence[float] | None = None,
                      score: Callable[[SolutionReport], float] | None = None) -> BaselineResult:
    """Best constant-speed circle around the BS-user midpoint.

    A (radius, speed) pair is kept only if the circle is completed at
    least once within T, the speed is admissible and the chord
    accelerations stay within a_max.  Powers are flat, silenced where the
    worst adversary gain reaches the user gain, then trimmed to causality.
    ``score`` defaults to EE.
    """
    radii = np.linspace(50.0, 800.0, 20) if radii is None else np.asarray(radii, dtype=float)
    speeds = np.linspace(cfg.v_min, cfg.v_max, 20) if speeds is None else np.asarray(speeds, dtype=float)
    score = score or (lambda rep: rep.ee_kbits_per_J)
    center = 0.5 * (np.asarray(cfg.bs_pos) + np.asarray(cfg.user_pos))
    to_user = np.asarray(cfg.user_pos) - center
    start = float(np.arctan2(to_user[1], to_user[0])) if np.any(to_user) else 0.0
    power = _flat_powers(cfg)
    best = None
    count = 0
    for r in radii:
        for v in speeds:
            if v < 2 * np.pi * r / cfg.horizon_T or not cfg.v_min <= v <= cfg.v_max:
                continue
            traj = circle_path(cfg, center, r, v, start)
            if np.max(np.abs(traj.accel)) > cfg.a_max:
                continue
            p_u = np.array(power.p_u)
            if cfg.adversaries:
                # same rule as the optimizer: no user power where an adversary hears better
                p_u[channel_gain(traj.pos, cfg.user_pos, cfg) <= worstcase_gains(traj.pos, cfg).max(axis=0)] = 0.0
            pw = trim_to_causality(traj, PowerSchedule(power.p_b, p_u), cfg)
            rep = evaluate_solution(traj, pw, cfg)
            count += 1
            s = score(rep)
            if best is None or s > best.score:
                best = BaselineResult(traj, pw, rep.ee_kbits_per_J, float(r), float(v), s, 0)
    if best is None:
        raise ScenarioError("no admissible circle on the baseline grid", "v_max")
    best.evaluated = count
    return best


@dataclass
class OracleResult:
    ee_kbits_per_J: float
    ratio: float
    traj: Trajectory
    pw: PowerSchedule
    combinations: int


class OracleBudgetError(ValueError):
    pass


def tiny_oracle(cfg: ScenarioConfig, pos_grids: Sequence[np.ndarray], speed_grid: Sequence[float],
                p_b_levels: Sequence[float], p_u_levels: Sequence[float], budget: float = 5e6) -> OracleResult:
    """Exhaustive EE maximization over small grids, exact constraints only.

    ``pos_grids[n]`` holds candidate positions of slot n.  Speeds come
    from ``speed_grid`` and accelerations follow from the segments (zero in
    the last slot), and v_N >= v_2 as in the optimizer.  Powers take the given levels, with p_b[N] = p_u[1] = 0.
    Secrecy does not depend on speed, so per path the best ratio pairs the
    best power choice with the least (or, for negative secrecy, the most)
    energy.  Raises :class:`OracleBudgetError` past ``budget`` evaluations.
    """
    N, rho = cfg.N, cfg.slot_len
    if N > 4:
        raise OracleBudgetError("tiny_oracle supports N <= 4")
    grids = [np.atleast_2d(np.asarray(g, dtype=float)) for g in pos_grids]
    if len(grids) != N:
        raise ValueError("need one position grid per slot")
    speed_grid = np.asarray(speed_grid, dtype=float)
    pb_combos = np.array(list(itertools.product(p_b_levels, repeat=N - 1)), dtype=float)
    pu_combos = np.array(list(itertools.product(p_u_levels, repeat=N - 1)), dtype=float)
    pb_combos = pb_combos[pb_combos.mean(axis=1) <= cfg.p_b_avg * (1 + 1e-12)]
    pu_combos = pu_combos[pu_combos.mean(axis=1) <= cfg.p_u_avg * (1 + 1e-12)]
    pb_combos = pb_combos[np.all((pb_combos >= 0) & (pb_combos <= cfg.p_b_max), axis=1)]
    pu_combos = pu_combos[np.all((pu_combos >= 0) & (pu_combos <= cfg.p_u_max), axis=1)]
    speed_combos = np.array(list(itertools.product(speed_grid, repeat=N)), dtype=float)
    speed_combos = speed_combos[np.all((speed_combos >= cfg.v_min) & (speed_combos <= cfg.v_max), axis=1)]
    # same guard as the optimizer: the kinetic terms telescope to m/2 (v_N^2 - v_2^2) >= 0
    speed_combos = speed_combos[speed_combos[:, -1] >= speed_combos[:, 1]]
    n_paths = math.prod(len(g) for g in grids)
    per_path = len(pb_combos) * len(pu_combos) + len(speed_combos)
    total = n_paths * per_path
    if total > budget:
        raise OracleBudgetError(f"{total:.3g} evaluations exceed the budget of {budget:.3g}")
    if not len(pb_combos) or not len(pu_combos) or not len(speed_combos):
        raise OracleBudgetError("grids admit no feasible powers or speeds")

    p_b = np.zeros((len(pb_combos), N))
    p_b[:, :-1] = pb_combos
    p_u = np.zeros((len(pu_combos), N))
    p_u[:, 1:] = pu_combos
    sig = cfg.noise_power
    best = None
    for idx in itertools.product(*(range(len(g)) for g in grids)):
        pos = np.array([grids[n][i] for n, i in enumerate(idx)])
        L = segment_lengths(pos)
        acc = np.zeros((len(speed_combos), N))
        acc[:, :-1] = 2.0 * (L - rho * speed_combos[:, :-1]) / rho ** 2
        ok = np.all(np.abs(acc) <= cfg.a_max + 1e-12, axis=1)
        if not ok.any():
            continue
        vs, acc = speed_combos[ok], acc[ok]
        dk = 0.5 * cfg.mass_m * np.diff(vs ** 2, axis=1)
        dk[:, 0] = 0.0  # slot 2 kinetic term, see kinetic_deltas
        energy = propulsion_power(vs[:, 1:], acc[:, 1:], dk, cfg).sum(axis=1)

        gb = channel_gain(pos, cfg.bs_pos, cfg)
        gu = channel_gain(pos, cfg.user_pos, cfg)
        ga = worstcase_gains(pos, cfg)
        rb = np.log2(1 + p_b * gb / sig)
        ru = np.log2(1 + p_u * gu / sig)
        worst = np.max(np.log2(1 + p_u[:, None, :] * ga[None] / sig), axis=1) if len(ga) else 0.0
        sec = (ru - worst)[:, 1:].sum(axis=1)
        # exact information causality for every (p_b, p_u) pair
        cum_b = np.cumsum(rb[:, :-1], axis=1)
        cum_u = np.cumsum(ru[:, 1:], axis=1)
        icc = np.all(cum_u[None, :, :] <= cum_b[:, None, :] + 1e-12, axis=2)
        icc &= (ru[:, 0] == 0)[None, :]
        if not icc.any():
            continue
        ib, iu = np.nonzero(icc)
        k = int(np.argmax(sec[iu]))
        num = float(sec[iu[k]])
        j = int(np.argmin(energy)) if num >= 0 else int(np.argmax(energy))
        ratio = num / float(energy[j])
        if best is None or ratio > best[0]:
            best = (ratio, pos, vs[j], acc[j], p_b[ib[k]], p_u[iu[k]])
    if best is None:
        raise OracleBudgetError("no feasible grid point")
    ratio, pos, v, a, pb, pu = best
    traj = Trajectory(pos, v, a)
    pw = PowerSchedule(pb, pu)
    return OracleResult(evaluate_solution(traj, pw, cfg).ee_kbits_per_J, ratio, traj, pw, int(total))


def disk_clearance(traj: Trajectory, pw: PowerSchedule, cfg: ScenarioConfig) -> float:
    """Smallest gap between a transmitting slot's ground point and an uncertainty disk.

    Negative when the UAV transmits from above a disk.  Disks come from ``cfg``.
    """
    tx = np.asarray(pw.p_u) > 0
    if not tx.any() or not cfg.adversaries:
        return float("inf")
    pos = np.asarray(traj.pos)[tx]
    gaps = [np.linalg.norm(pos - np.asarray(a.est_pos), axis=1) - a.radius_R for a in cfg.adversaries]
    return float(np.min(gaps))
