"""Power and speed block: positions fixed, optimize p_b, p_u and speeds.

With positions pinned, the mobility equation ties each acceleration to its
slot's speed, a_n = 2 (L_n - rho v_n) / rho^2, so accelerations are affine
in v and mobility holds exactly.  Speeds are scaled by ``V_SCALE`` inside
the program so the energy terms are O(100).

BS and user rates are exact exponential-cone hypographs.  Worst-case
secrecy is exact as well, as a concave function of the delivered user rate
(see :func:`_exact_secrecy`); the classic alternative subtracts a
tangent of the adversary rate in p_u (``adv_model="tangent"``).  The only
approximation left is the tangent of v_2^2 in the telescoped kinetic
energy, which over-estimates energy with equality at the incumbent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProgram, SolveResult, affine_sum, log_term
from .driver import BlockResult, run_block
from .sca import LN2, taylor_square_lower
from .scenario import (
    PowerSchedule,
    ScenarioConfig,
    ScenarioError,
    Trajectory,
    channel_gain,
    segment_lengths,
    trim_to_causality,
    worstcase_gains,
)

V_SCALE = 30.0


def speed_band(pos, cfg: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot speed interval allowed by fixed positions.

    Slot n < N must cover segment n with |a_n| <= a_max; slot N has no
    segment.  Raises if some interval is empty.
    """
    rho = cfg.slot_len
    L = segment_lengths(pos)
    lo = np.full(cfg.N, cfg.v_min)
    hi = np.full(cfg.N, cfg.v_max)
    slack = 0.5 * rho ** 2 * cfg.a_max
    lo[:-1] = np.maximum(lo[:-1], (L - slack) / rho)
    hi[:-1] = np.minimum(hi[:-1], (L + slack) / rho)
    bad = np.flatnonzero(lo > hi + 1e-12)
    if len(bad):
        n = int(bad[0])
        raise ScenarioError(
            f"slot {n + 1}: no speed in [{cfg.v_min}, {cfg.v_max}] covers segment length "
            f"{L[n]:.6g} m with |a| <= {cfg.a_max}",
            "trajectory",
        )
    return lo, np.maximum(hi, lo)


@dataclass
class PowerSpeedModel:
    """Convexified power/speed program at one expansion point.

    Array variables are indexed by slot: ``p_b[k]`` and ``t_b[k]`` belong
    to slot k+1 (slots 1..N-1); ``p_u``, ``zeta``, ``V``, ``e`` to slot
    k+2 (slots 2..N).
    """

    cfg: ScenarioConfig
    pos: np.ndarray
    lam: float
    prog: ConicProgram
    band: tuple[np.ndarray, np.ndarray]
    p_u_star: np.ndarray
    g_b: np.ndarray
    g_u: np.ndarray
    g_a: np.ndarray
    vars: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.cfg.N - 1

    def extract(self, res: SolveResult) -> tuple[Trajectory, PowerSchedule]:
        """Feasible (trajectory, powers) from a solve, repaired to exact constraints."""
        cfg, N, rho = self.cfg, self.cfg.N, self.cfg.slot_len
        p_b = np.zeros(N)
        p_u = np.zeros(N)
        p_b[:-1] = np.clip(res.value(self.vars["p_b"]), 0.0, cfg.p_b_max)
        p_u[1:] = np.clip(res.value(self.vars["p_u"]), 0.0, cfg.p_u_max)
        if p_b[:-1].mean() > cfg.p_b_avg:
            p_b *= cfg.p_b_avg / p_b[:-1].mean()
        if p_u[1:].mean() > cfg.p_u_avg:
            p_u *= cfg.p_u_avg / p_u[1:].mean()
        # a slot whose user gain is below the worst adversary gain has
        # negative secrecy at any p_u > 0; silencing it only helps and keeps ICC
        if len(self.g_a):
            p_u[self.g_u <= self.g_a.max(axis=0)] = 0.0
        lo, hi = self.band
        v = np.empty(N)
        v[0] = self.vars["v1"]
        v[1:] = np.clip(V_SCALE * res.value(self.vars["V"]), lo[1:], hi[1:])
        v[-1] = max(v[-1], v[1])  # kinetic guard, exact
        a = np.zeros(N)
        a[:-1] = 2.0 * (segment_lengths(self.pos) - rho * v[:-1]) / rho ** 2
        traj = Trajectory(self.pos, v, a)
        zeta = np.zeros(N)
        zeta[1:] = res.value(self.vars["zeta"])
        pw = trim_to_causality(traj, PowerSchedule(p_b, p_u), cfg, target_rates=zeta)
        return traj, pw

    def surrogate_parts(self, res: SolveResult) -> tuple[float, float]:
        """(surrogate secrecy sum, surrogate energy sum) at a solution."""
        if self.vars["tau"] is not None:
            return float(sum(res.value(t) for t in self.vars["tau"])), float(res.value(self.vars["energy"]))
        num = float(np.sum(res.value(self.vars["zeta"])))
        if self.vars["e"] is not None:
            num -= float(np.sum(res.value(self.vars["e"])))
        return num, float(res.value(self.vars["energy"]))


def _exact_secrecy(prog, zeta, p_u, g_u, g_a, sig):
    """Per-slot worst-case secrecy as a concave function of the user rate.

    At the least power delivering rate zeta, an adversary with gain ratio
    c = g_a / g_u < 1 sees log2(1 - c + c 2^zeta), so the secrecy
    g(zeta) = zeta - log2(1 - c + c 2^zeta) is concave and increasing.
    tau <= g(zeta) is the pair of exponential cones
    (1 - c) 2^(tau - zeta) + c 2^tau <= 1.  Slots where some c >= 1 can
    only lose secrecy by transmitting and are silenced.
    """
    tau = []
    for k in range(len(zeta)):
        if len(g_a) == 0:
            tau.append(zeta[k])
            continue
        c = g_a[:, k] / g_u[k]
        if np.any(c >= 1.0):
            prog.add_le(p_u[k], 0.0, name=f"silent[{k}]")
            continue
        t = prog.variable(f"tau[{k}]")
        for i, ci in enumerate(c):
            u1 = prog.variable(f"lse1[{i}][{k}]")
            u2 = prog.variable(f"lse2[{i}][{k}]")
            prog.add_exp(LN2 * (t - zeta[k]) + np.log1p(-ci), 1.0, u1, name=f"sec1[{i}][{k}]")
            prog.add_exp(LN2 * t + np.log(ci), 1.0, u2, name=f"sec2[{i}][{k}]")
            prog.add_le(u1 + u2, 1.0, name=f"sec[{i}][{k}]")
        tau.append(t)
    return tau


def _tangent_adversary(prog, p_u, p_star, g_a, sig):
    """e >= tangent of log2(1 + c p_u) at the incumbent, per adversary."""
    M = len(p_u)
    e = prog.variable("e", M)
    for i in range(len(g_a)):
        c = g_a[i] / sig
        f0 = np.log2(1.0 + c * p_star)
        slope = c / ((1.0 + c * p_star) * LN2)
        for k in range(M):
            prog.add_ge(e[k], f0[k] + slope[k] * (p_u[k] - p_star[k]), name=f"eadv[{i}][{k}]")
    return e


def build_power_speed_model(traj: Trajectory, pw: PowerSchedule, cfg: ScenarioConfig, lam: float,
                            adv_model: str = "exact") -> PowerSpeedModel:
    """Convex power/speed program expanded at the incumbent (traj, pw).

    ``adv_model="exact"`` encodes worst-case secrecy exactly in rate space;
    ``"tangent"`` subtracts a tangent upper bound of the adversary rate in
    p_u instead, which needs re-expansion passes to converge.
    """
    N, rho, M = cfg.N, cfg.slot_len, cfg.N - 1
    pos = np.asarray(traj.pos, dtype=float)
    lo, hi = speed_band(pos, cfg)
    L = segment_lengths(pos)
    g_b = channel_gain(pos, cfg.bs_pos, cfg)
    g_u = channel_gain(pos, cfg.user_pos, cfg)
    g_a = worstcase_gains(pos, cfg)
    sig = cfg.noise_power

    prog = ConicProgram()
    p_b = prog.variable("p_b", M, lb=0.0, ub=cfg.p_b_max)
    p_u = prog.variable("p_u", M, lb=0.0, ub=cfg.p_u_max)
    V = np.empty(M, dtype=object)
    for k in range(M):
        V[k] = prog.variable(f"V[{k}]", lb=lo[k + 1] / V_SCALE, ub=hi[k + 1] / V_SCALE)
    prog.add_le(affine_sum(p_b), M * cfg.p_b_avg, name="pb_avg")
    prog.add_le(affine_sum(p_u), M * cfg.p_u_avg, name="pu_avg")

    t_b = np.array([log_term(prog, p_b[k], g_b[k], sig, name=f"rb[{k}]") for k in range(M)], dtype=object)
    zeta = np.array([log_term(prog, p_u[k], g_u[k + 1], sig, name=f"ru[{k}]") for k in range(M)], dtype=object)
    for k in range(M):
        prog.add_ge(zeta[k], 0.0, name=f"zeta[{k}].lb")
        prog.add_le(affine_sum(zeta[: k + 1]) - affine_sum(t_b[: k + 1]), 0.0, name=f"icc[{k}]")

    p_star = np.asarray(pw.p_u, dtype=float)[1:]
    if adv_model == "exact":
        tau = _exact_secrecy(prog, zeta, p_u, g_u[1:], g_a[:, 1:], sig)
        num_terms, e = tau, None
    elif adv_model == "tangent":
        e = _tangent_adversary(prog, p_u, p_star, g_a[:, 1:], sig) if len(g_a) else None
        num_terms, tau = zeta, None
    else:
        raise ValueError(f"unknown adversary model {adv_model!r}")

    # propulsion energy epigraphs, per slot 2..N in scaled speed V
    a_scale = max(cfg.a_max, 1.0)
    w_cube = cfg.alpha_u * V_SCALE ** 3
    w_inv = cfg.beta_u / V_SCALE
    w_acc = cfg.beta_u * a_scale ** 2 / (cfg.gravity_g ** 2 * V_SCALE)
    terms = []
    for k in range(M):
        s = prog.variable(f"sq[{k}]")
        cube = prog.variable(f"cube[{k}]")
        inv = prog.variable(f"inv[{k}]")
        prog.add_rsoc([V[k]], s, 1.0, name=f"sq.soc[{k}]")
        prog.add_rsoc([s], cube, V[k], name=f"cube.soc[{k}]")
        prog.add_rsoc([1.0], inv, V[k], name=f"inv.soc[{k}]")
        terms += [w_cube * cube, w_inv * inv]
        n = k + 1  # array index of this slot
        if n < N - 1:
            acc = 2.0 * (L[n] - rho * V_SCALE * V[k]) / rho ** 2
            qa = prog.variable(f"qa[{k}]")
            prog.add_rsoc([acc / a_scale], qa, V[k], name=f"acc.soc[{k}]")
            terms.append(w_acc * qa)
    energy = affine_sum(terms)
    if cfg.mass_m > 0:
        # sum of kinetic deltas telescopes to m/2 (v_N^2 - v_2^2)
        kin = prog.variable("kinN")
        prog.add_rsoc([V[-1]], kin, 1.0, name="kin.soc")
        V2_star = float(np.clip(traj.speed[1], lo[1], hi[1])) / V_SCALE
        _, (b0, b1) = taylor_square_lower(V2_star, 0.0)
        w_kin = 0.5 * cfg.mass_m * V_SCALE ** 2 / rho
        energy = energy + w_kin * (kin - (b0 + b1 * V[0]))
        prog.add_ge(V[-1], V[0], name="kin.guard")
    num = affine_sum(num_terms) - (affine_sum(e) if e is not None else 0.0)
    prog.maximize((num - lam * energy) / M)

    # slot 1 speed is outside the program: closest to the segment pace
    v1 = float(np.clip(L[0] / rho, lo[0], hi[0]))
    model = PowerSpeedModel(cfg, pos, float(lam), prog, (lo, hi), p_star, g_b, g_u, g_a)
    model.vars = dict(p_b=p_b, p_u=p_u, V=V, t_b=t_b, zeta=zeta, e=e, tau=tau, energy=energy, v1=v1)
    return model


def build_power_speed_program(traj: Trajectory, pw: PowerSchedule, cfg: ScenarioConfig, lam: float,
                              adv_model: str = "exact") -> ConicProgram:
    return build_power_speed_model(traj, pw, cfg, lam, adv_model).prog


def solve_power_speed(traj: Trajectory, pw: PowerSchedule, cfg: ScenarioConfig, *, lam: float | None = None,
                      max_iter: int = 30, backend: str = "clarabel", adv_model: str = "exact") -> BlockResult:
    """Optimize powers and speeds with positions held fixed.

    Runs Dinkelbach iterations, re-expanding the surrogate at each new
    candidate, until |F| <= dinkelbach_tol.  With ``lam`` fixed it runs
    plain SCA passes on secrecy - lam * energy instead.  The incumbent must
    be feasible; it is returned unchanged (with a message) if solving fails.
    """
    speed_band(traj.pos, cfg)

    def build(t, p, lam_k):
        return build_power_speed_model(t, p, cfg, lam_k, adv_model)

    return run_block(build, traj, pw, cfg, lam=lam, max_iter=max_iter, backend=backend)


def _lagrangian_gradient(prog: ConicProgram, res: SolveResult, exclude: set[str] = frozenset()) -> np.ndarray:
    """grad(objective) - sum mu grad(g) + sum <z, grad(cone expr)> over
    all constraints not in ``exclude``; zero at a primal-dual optimum."""
    grad = np.zeros(prog.num_vars)
    for i, c in prog.objective.terms.items():
        grad[i] += c
    for con in prog.constraints:
        if con.name in exclude:
            continue
        d = np.atleast_1d(res.duals[con.name])
        if con.kind in ("le", "eq"):
            for i, c in con.exprs[0].terms.items():
                grad[i] -= d[0] * c
        elif con.kind == "psd":
            n = con.size
            pairs = [(i, j) for j in range(n) for i in range(j + 1)]
            for (i, j), e in zip(pairs, con.exprs):
                w = d[i, j] * (1.0 if i == j else 2.0)
                for v, c in e.terms.items():
                    grad[v] += w * c
        else:
            for dk, e in zip(d, con.exprs):
                for v, c in e.terms.items():
                    grad[v] += dk * c
    return grad


def _index(expr) -> int:
    (i,) = expr.terms
    return i


@dataclass
class KktReport:
    """First-order optimality of a solved power/speed program.

    Multipliers are rescaled to the unnormalized objective (sum of rates).
    ``stationarity`` is the largest entry of the Lagrangian gradient and
    ``complementarity`` the largest |<slack, multiplier>| over all
    constraints, both at the returned primal-dual pair.

    ``kappa_u[k]`` / ``kappa_b[k]`` are the marginal values of the user and
    BS rates, and ``reduced_p_u`` / ``reduced_p_b`` evaluate
    kappa * d rate / d p - price of power at the primal powers.  The
    objective is flat near its optimum, so primal powers are accurate only
    to about the square root of the solver tolerance and these reduced
    residuals are correspondingly larger.
    """

    icc_duals: np.ndarray
    kappa_b: np.ndarray
    kappa_u: np.ndarray
    reduced_p_b: np.ndarray
    reduced_p_u: np.ndarray
    stationarity: float
    complementarity: float

    @property
    def icc_sum(self) -> float:
        return float(self.icc_duals.sum())

    def icc_ok(self, tol: float = 1e-8) -> bool:
        return self.icc_sum <= 1.0 + tol and bool(np.all(self.icc_duals >= -tol))


def kkt_diagnostics(model: PowerSpeedModel, res: SolveResult, primal: np.ndarray | None = None) -> KktReport:
    """KKT residuals of a solved :class:`PowerSpeedModel`.

    ``primal`` replaces the solver's primal point (duals are kept), which
    shows how the residuals react to a perturbed solution.
    """
    prog, M, sig = model.prog, model.M, model.cfg.noise_power
    x = res.primal if primal is None else np.asarray(primal, dtype=float)
    scale = float(M)
    icc = scale * np.array([res.dual(f"icc[{k}]") for k in range(M)])
    stat = float(np.abs(scale * _lagrangian_gradient(prog, res)).max())
    comp = 0.0
    for con in prog.constraints:
        vals = np.array([e.value(x) for e in con.exprs])
        d = np.atleast_1d(res.duals[con.name])
        if con.kind == "psd":
            n = con.size
            pairs = [(i, j) for j in range(n) for i in range(j + 1)]
            d = np.array([d[i, j] * (1.0 if i == j else 2.0) for i, j in pairs])
        comp = max(comp, abs(scale * float(vals @ d)))

    def reduced(rates, powers, gains, tag):
        kappa, resid = np.zeros(M), np.zeros(M)
        for k in range(M):
            g = scale * _lagrangian_gradient(prog, res, {f"{tag}[{k}]"})
            kappa[k] = g[_index(rates[k])]
            kk = gains[k] / sig
            slope = kk / ((1.0 + kk * x[_index(powers[k])]) * LN2)
            resid[k] = kappa[k] * slope + g[_index(powers[k])]
        return kappa, resid

    kb, rb = reduced(model.vars["t_b"], model.vars["p_b"], model.g_b[:-1], "rb")
    ku, ru = reduced(model.vars["zeta"], model.vars["p_u"], model.g_u[1:], "ru")
    return KktReport(icc, kb, ku, rb, ru, stat, comp)
