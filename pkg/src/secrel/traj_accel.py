"""Trajectory and acceleration block: powers and speeds fixed, optimize positions.

Positions are in units of the altitude (``L0 = H``) inside the program.
Accelerations follow from the segment lengths, a_n = 2(|D_n| - rho v_n)/rho^2,
so mobility holds exactly after extraction.  Around an incumbent path the
non-convex pieces are bounded as follows:

* user and BS rates: squared-distance slacks w >= |P-U|^2 + H^2 and
  h >= |P-B|^2 + H^2 with tangent lower bounds of log2(1 + c/w);
* adversary rates: a slack z certified by a 3x3 S-procedure LMI to be at
  most the squared distance to every point of the uncertainty disk, with
  |P-c|^2 in the LMI replaced by its tangent (a lower bound); the rate
  log2(z + c) - log2(z) is bounded above by the tangent of its concave
  first term, keeping -log2(z) exact in an exponential cone;
* acceleration energy: (|D| - k)^2 <= |D|^2 - 2k <u*, D> + k^2;
* |a| <= a_max: |D| <= rho v + rho^2 a_max / 2 exactly, and the lower side
  through <u*, D>, which never exceeds |D|.

Every bound is tight at the incumbent, so each pass can only improve the
true objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProgram, SolveResult, affine_sum
from .driver import BlockResult, run_block
from .sca import LN2, taylor_log_lower
from .scenario import (
    PowerSchedule,
    ScenarioConfig,
    Trajectory,
    channel_gain,
    kinetic_deltas,
    propulsion_power,
    segment_lengths,
    trim_to_causality,
    worstcase_gains,
)
from .robust import worstcase_sq_distance

# weight of the slack tie-break term, per slot and relative to the objective
TIE_BREAK = 1e-6


@dataclass
class TrajAccelModel:
    """Convexified trajectory program at one expansion point.

    ``vars`` maps names to program expressions: ``X``, ``Y`` (N,) scaled
    positions; ``w``, ``zeta`` and ``z``, ``eps``, ``e`` keyed by slot index
    for transmitting slots; ``h``, ``t_b`` for slots with BS power.
    """

    cfg: ScenarioConfig
    traj: Trajectory
    pw: PowerSchedule
    lam: float
    prog: ConicProgram
    L0: float
    tx_slots: np.ndarray
    rx_slots: np.ndarray
    vars: dict = field(default_factory=dict)

    def positions(self, res: SolveResult) -> np.ndarray:
        return self.L0 * np.column_stack([res.value(self.vars["X"]), res.value(self.vars["Y"])])

    def extract(self, res: SolveResult) -> tuple[Trajectory, PowerSchedule]:
        cfg, rho = self.cfg, self.cfg.slot_len
        pos = self.positions(res)
        v = np.array(self.traj.speed)
        a = np.array(self.traj.accel)
        a[:-1] = 2.0 * (segment_lengths(pos) - rho * v[:-1]) / rho ** 2
        traj = Trajectory(pos, v, a)
        p_u = np.array(self.pw.p_u)
        g_a = worstcase_gains(pos, cfg)
        if len(g_a):
            p_u[channel_gain(pos, cfg.user_pos, cfg) <= g_a.max(axis=0)] = 0.0
        zeta = np.zeros(cfg.N)
        for n, expr in self.vars["zeta"].items():
            zeta[n] = res.value(expr)
        pw = trim_to_causality(traj, PowerSchedule(self.pw.p_b, p_u), cfg, target_rates=zeta)
        return traj, pw

    def extrapolate(self, cand: tuple[Trajectory, PowerSchedule], theta: float):
        """Push the path past ``cand`` along the step from the incumbent.

        Returns None when the extrapolated path breaks a mobility limit.
        """
        cfg, rho = self.cfg, self.cfg.slot_len
        traj, pw = cand
        pos = traj.pos + theta * (traj.pos - self.traj.pos)
        v = np.array(traj.speed)
        a = np.array(traj.accel)
        a[:-1] = 2.0 * (segment_lengths(pos) - rho * v[:-1]) / rho ** 2
        if np.any(np.abs(a) > cfg.a_max):
            return None
        new = Trajectory(pos, v, a)
        p_u = np.array(pw.p_u)
        g_a = worstcase_gains(pos, cfg)
        if len(g_a):
            p_u[channel_gain(pos, cfg.user_pos, cfg) <= g_a.max(axis=0)] = 0.0
        return new, trim_to_causality(new, PowerSchedule(pw.p_b, p_u), cfg)

    def surrogate_parts(self, res: SolveResult) -> tuple[float, float]:
        num = sum(res.value(t) for t in self.vars["zeta"].values())
        num -= sum(res.value(t) for t in self.vars["e"].values())
        return float(num), float(res.value(self.vars["energy"]))

    def slack_values(self, res: SolveResult) -> dict:
        """Solved slacks in physical units (m^2), keyed like ``vars``."""
        s2 = self.L0 ** 2
        return {
            "w": {n: s2 * res.value(x) for n, x in self.vars["w"].items()},
            "h": {n: s2 * res.value(x) for n, x in self.vars["h"].items()},
            "z": {key: s2 * res.value(x) for key, x in self.vars["z"].items()},
            "eps": {key: res.value(x) for key, x in self.vars["eps"].items()},
        }


def build_traj_model(traj: Trajectory, pw: PowerSchedule, cfg: ScenarioConfig, lam: float) -> TrajAccelModel:
    """Convexified trajectory program expanded at the incumbent path."""
    N, rho, M = cfg.N, cfg.slot_len, cfg.N - 1
    L0 = cfg.altitude_H
    H2 = 1.0  # H^2 in scaled units
    sig = cfg.noise_power
    gamma = cfg.beta0 / (sig * L0 ** 2)  # SNR per watt at unit scaled distance
    P0 = np.asarray(traj.pos, dtype=float) / L0
    v = np.asarray(traj.speed, dtype=float)
    bs = np.asarray(cfg.bs_pos) / L0
    us = np.asarray(cfg.user_pos) / L0
    tx = np.flatnonzero(np.asarray(pw.p_u) > 0)
    rx = np.flatnonzero(np.asarray(pw.p_b) > 0)

    prog = ConicProgram()
    X = prog.variable("x", N)
    Y = prog.variable("y", N)
    reg = []

    # mobility band and acceleration energy per segment
    D0 = np.diff(P0, axis=0)
    len0 = np.linalg.norm(D0, axis=1)
    half = 0.5 * rho ** 2 * cfg.a_max / L0
    acc_terms = []
    for n in range(N - 1):
        dx, dy = X[n + 1] - X[n], Y[n + 1] - Y[n]
        k = rho * v[n] / L0
        prog.add_soc(k + half, [dx, dy], name=f"seg.hi[{n}]")
        u = D0[n] / len0[n] if len0[n] > 1e-12 else np.zeros(2)
        if k - half > 0:
            prog.add_ge(u[0] * dx + u[1] * dy, k - half, name=f"seg.lo[{n}]")
        if n >= 1:  # slot 1 energy is not counted
            q = prog.variable(f"qa[{n}]")
            const = k ** 2 * (1.0 - float(u @ u))
            prog.add_sum_squares_le([dx - k * u[0], dy - k * u[1]], q - const, name=f"acc.epi[{n}]")
            weight = 4.0 * cfg.beta_u * L0 ** 2 / (v[n] * cfg.gravity_g ** 2 * rho ** 4)
            acc_terms.append(weight * q)
    fixed = propulsion_power(v[1:], np.zeros(N - 1), kinetic_deltas(v, cfg)[1:], cfg)
    fixed_sum = float(fixed.sum())
    if abs(traj.accel[-1]) > 0:
        fixed_sum += cfg.beta_u * traj.accel[-1] ** 2 / (v[-1] * cfg.gravity_g ** 2)
    energy = affine_sum(acc_terms) + fixed_sum

    # user link: zeta <= log2(1 + p gamma / w), w >= |P-U|^2 + H^2
    w_vars, zeta = {}, {}
    for n in tx:
        w = prog.variable(f"w[{n}]")
        prog.add_sum_squares_le([X[n] - us[0], Y[n] - us[1]], w - H2, name=f"w.epi[{n}]")
        w_star = float(np.sum((P0[n] - us) ** 2) + H2)
        _, (b0, b1) = taylor_log_lower(pw.p_u[n] * gamma, w_star, 0.0)
        t = prog.variable(f"zeta[{n}]")
        prog.add_le(t, b0 + b1 * w, name=f"zeta.ub[{n}]")
        prog.add_ge(t, 0.0, name=f"zeta.lb[{n}]")
        w_vars[n], zeta[n] = w, t
        reg.append(-w / w_star)

    # BS link lower bounds feed information causality
    h_vars, t_b = {}, {}
    for n in rx:
        h = prog.variable(f"h[{n}]")
        prog.add_sum_squares_le([X[n] - bs[0], Y[n] - bs[1]], h - H2, name=f"h.epi[{n}]")
        h_star = float(np.sum((P0[n] - bs) ** 2) + H2)
        _, (b0, b1) = taylor_log_lower(pw.p_b[n] * gamma, h_star, 0.0)
        t_b[n] = b0 + b1 * h
        h_vars[n] = h
        reg.append(-h / h_star)
    for n in range(1, N):
        sent = affine_sum(zeta[j] for j in tx if 1 <= j <= n)
        got = affine_sum(t_b[j] for j in rx if j <= n - 1)
        if sent.terms:
            prog.add_le(sent - got, 0.0, name=f"icc[{n}]")

    # worst-case adversary rates via the S-procedure
    z_vars, eps_vars, e_vars = {}, {}, {}
    for n in tx:
        e = prog.variable(f"e[{n}]")
        e_vars[n] = e
        for i, adv in enumerate(cfg.adversaries):
            c = np.asarray(adv.est_pos) / L0
            R = adv.radius_R / L0
            z = prog.variable(f"z[{i}][{n}]", lb=H2)
            eps = prog.variable(f"eps[{i}][{n}]", lb=0.0)
            d0 = P0[n] - c
            # tangent of |P - c|^2 at the incumbent
            lin = float(d0 @ d0) + 2.0 * d0[0] * (X[n] - P0[n, 0]) + 2.0 * d0[1] * (Y[n] - P0[n, 1])
            m = lin + H2 - z - R ** 2 * eps
            cx, cy = c[0] - X[n], c[1] - Y[n]
            prog.add_psd([[eps + 1.0, 0.0, cx], [0.0, eps + 1.0, cy], [cx, cy, m]], name=f"lmi[{i}][{n}]")
            # log2(1 + c/z) = log2(z + c) - log2(z): tangent of the concave first
            # part (an upper bound) and the second part exact, e >= T(z) - log2(z)
            z_star = float(worstcase_sq_distance(P0[n] * L0, adv, cfg)) / L0 ** 2
            cp = pw.p_u[n] * gamma
            T = np.log2(z_star + cp) + (z - z_star) / ((z_star + cp) * LN2)
            prog.add_exp(LN2 * (T - e), 1.0, z, name=f"eadv[{i}][{n}]")
            z_vars[(i, n)], eps_vars[(i, n)] = z, eps
            reg.append(z / z_star)

    num = affine_sum(zeta.values()) - affine_sum(e_vars.values())
    objective = (num - lam * energy) / M
    if reg:
        objective = objective + (TIE_BREAK / M) * affine_sum(reg)
    prog.maximize(objective)
    model = TrajAccelModel(cfg, traj, pw, float(lam), prog, L0, tx, rx)
    model.vars = dict(X=X, Y=Y, w=w_vars, h=h_vars, zeta=zeta, t_b=t_b, z=z_vars, eps=eps_vars, e=e_vars,
                      energy=energy)
    return model


def build_traj_program(traj: Trajectory, pw: PowerSchedule, cfg: ScenarioConfig, lam: float) -> ConicProgram:
    return build_traj_model(traj, pw, cfg, lam).prog


def solve_traj_accel(traj: Trajectory, pw: PowerSchedule, cfg: ScenarioConfig, *, lam: float | None = None,
                     max_iter: int = 30, backend: str = "clarabel") -> BlockResult:
    """Optimize the path and accelerations with powers and speeds held fixed.

    Same loop contract as :func:`secrel.power_speed.solve_power_speed`.
    """

    def build(t, p, lam_k):
        return build_traj_model(t, p, cfg, lam_k)

    return run_block(build, traj, pw, cfg, lam=lam, max_iter=max_iter, backend=backend)


@dataclass
class TightnessReport:
    """Relative slack gaps at a solved trajectory program.

    ``w_gap[n]`` is (w - dist^2 - H^2) / w for the user link; ``z_gap`` is
    (bound - z) / z per (adversary, slot), where the bound is the largest z
    the linearized certificate admits.  Both are >= 0 up to solver
    tolerance and vanish when the slacks are active.  Only the adversary
    with the largest worst-case gain in a slot (``binding``) shapes the
    objective, so :attr:`max_z_gap` covers those; other z values are held
    only by the tie-break term.  ``h_gap`` is informative only where
    information causality binds.  ``lin_gap`` is the
    part of the true worst-case distance lost to the linearization, which
    shrinks as the expansion point converges.
    """

    w_gap: dict
    h_gap: dict
    z_gap: dict
    tol: float
    lin_gap: dict = field(default_factory=dict)
    binding: set = field(default_factory=set)

    @property
    def max_w_gap(self) -> float:
        return max((abs(g) for g in self.w_gap.values()), default=0.0)

    @property
    def max_z_gap(self) -> float:
        return max((abs(g) for k, g in self.z_gap.items() if k in self.binding), default=0.0)

    @property
    def ok(self) -> bool:
        return self.max_w_gap <= self.tol and self.max_z_gap <= self.tol


def tightness_diagnostics(res: SolveResult, model: TrajAccelModel, tol: float = 1e-3,
                          slacks: dict | None = None) -> TightnessReport:
    """Check that the distance slacks are active at the solved point.

    ``slacks`` overrides the solved slack values (physical units), which
    lets callers probe the check with constructed violations.
    """
    cfg = model.cfg
    pos = model.positions(res)
    vals = slacks if slacks is not None else model.slack_values(res)
    H2 = cfg.altitude_H ** 2
    w_gap = {}
    for n, w in vals["w"].items():
        w_gap[n] = (w - (np.sum((pos[n] - cfg.user_pos) ** 2) + H2)) / w
    h_gap = {}
    for n, h in vals["h"].items():
        h_gap[n] = (h - (np.sum((pos[n] - cfg.bs_pos) ** 2) + H2)) / h
    z_gap, lin_gap = {}, {}
    P0 = np.asarray(model.traj.pos, dtype=float)
    for (i, n), z in vals["z"].items():
        adv = cfg.adversaries[i]
        worst = worstcase_sq_distance(pos[n], adv, cfg)
        d0 = P0[n] - adv.est_pos
        lin = float(d0 @ d0 + 2.0 * d0 @ (pos[n] - P0[n]))
        loss = float(np.sum((pos[n] - adv.est_pos) ** 2)) - lin
        z_gap[(i, n)] = (worst - loss - z) / z
        lin_gap[(i, n)] = loss / z
    binding = set()
    for n in {n for _, n in vals["z"]}:
        keys = [(i, n) for i in range(len(cfg.adversaries)) if (i, n) in vals["z"]]
        binding.add(min(keys, key=lambda k: worstcase_sq_distance(pos[n], cfg.adversaries[k[0]], cfg)))
    return TightnessReport(w_gap, h_gap, z_gap, tol, lin_gap, binding)
