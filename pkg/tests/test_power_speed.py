import numpy as np
import pytest
from scipy.optimize import brentq

from secrel.pipeline import init_solution
from secrel.power_speed import (
    build_power_speed_model,
    kkt_diagnostics,
    solve_power_speed,
    speed_band,
)
from secrel.scenario import (
    PowerSchedule,
    ScenarioError,
    Trajectory,
    channel_gain,
    check_solution,
    default_config,
    evaluate_solution,
    icc_check,
    segment_lengths,
)


def _path(pos, cfg, speed=None):
    pos = np.asarray(pos, dtype=float)
    L = segment_lengths(pos)
    v = np.r_[L / cfg.slot_len, L[-1] / cfg.slot_len] if speed is None else np.asarray(speed, dtype=float)
    a = np.zeros(len(v))
    a[:-1] = 2.0 * (L - cfg.slot_len * v[:-1]) / cfg.slot_len ** 2
    return Trajectory(pos, v, a)


def _flat(cfg):
    n = cfg.N
    return PowerSchedule(np.r_[np.full(n - 1, cfg.p_b_avg), 0.0], np.r_[0.0, np.full(n - 1, cfg.p_u_avg)])


def _water_fill(gains, total):
    mu = brentq(lambda m: np.maximum(m - 1.0 / gains, 0.0).sum() - total, 0.0, total + 1.0 / gains.min())
    return np.maximum(mu - 1.0 / gains, 0.0)


def test_speed_band_reports_slot():
    cfg = default_config(slots_N=3, horizon_T=6.0)
    lo, hi = speed_band([[0, 0], [40, 0], [80, 0]], cfg)
    assert np.allclose(lo[:2], 15.0) and np.allclose(hi[:2], 25.0)
    assert lo[2] == cfg.v_min and hi[2] == cfg.v_max
    with pytest.raises(ScenarioError, match="slot 2"):
        speed_band([[0, 0], [40, 0], [40 + 300, 0]], cfg)


def test_grid_oracle_one_adversary():
    # N=3, nominal adversary (R=0), secrecy only: compare with a 2-D grid over (p_u[2], p_u[3])
    cfg = default_config(slots_N=3, horizon_T=30.0, bs_pos=[-100.0, 0.0],
                         adversaries=[{"est_pos": [150.0, 0.0], "radius_R": 0.0}])
    traj = _path([[-60.0, 0.0], [0.0, 0.0], [30.0, 0.0]], cfg)
    out = solve_power_speed(traj, _flat(cfg), cfg, lam=0.0)
    got = evaluate_solution(out.traj, out.pw, cfg)
    assert check_solution(out.traj, out.pw, cfg) == []

    grid = np.linspace(0.0, cfg.p_u_max, 1001)
    p2, p3 = np.meshgrid(grid, grid, indexing="ij")
    pos = traj.pos
    sig = cfg.noise_power
    gu = channel_gain(pos, cfg.user_pos, cfg)
    ga = channel_gain(pos, cfg.adversaries[0].est_pos, cfg)
    gb = channel_gain(pos, cfg.bs_pos, cfg)
    rb = np.log2(1 + cfg.p_b_avg * gb[:2] / sig)
    r2, r3 = np.log2(1 + p2 * gu[1] / sig), np.log2(1 + p3 * gu[2] / sig)
    sec = r2 - np.log2(1 + p2 * ga[1] / sig) + r3 - np.log2(1 + p3 * ga[2] / sig)
    ok = (p2 + p3 <= 2 * cfg.p_u_avg + 1e-12) & (r2 <= rb[0]) & (r2 + r3 <= rb.sum())
    best = sec[ok].max()
    assert got.secrecy_sum == pytest.approx(best, rel=1e-3)
    assert got.secrecy_sum <= best * (1 + 1e-6) + 1e-6


def test_throughput_monotone_in_peak_power():
    # adversaries removed and lam = 0: a looser peak cap can only help
    values = []
    for p_max in (1.0, 2.0, 5.0, 10.0):
        cfg = default_config(slots_N=4, horizon_T=8.0, adversaries=[], p_b_avg=1.0, p_b_max=p_max,
                             bs_pos=[-1500.0, 0.0])
        traj = _path([[-200.0, 0.0], [-150.0, 0.0], [-100.0, 0.0], [-50.0, 0.0]], cfg)
        pw = PowerSchedule([0.1, 3.0, 0.1, 0.0], [0.0, 0.5, 0.5, 0.5])
        model = build_power_speed_model(traj, pw, cfg, 0.0)
        res = model.prog.solve()
        assert res.ok
        values.append(res.objective_value)
    assert np.all(np.diff(values) >= -1e-7)


def test_large_lambda_drives_speed_to_energy_minimum():
    cfg = default_config(slots_N=6, horizon_T=12.0)
    # segments of 60 m in 2 s slots: 30 m/s needs no acceleration
    pos = np.column_stack([np.arange(6) * 60.0 - 150.0, np.full(6, -300.0)])
    traj = _path(pos, cfg, speed=np.full(6, 26.0))
    out = solve_power_speed(traj, _flat(cfg), cfg, lam=1e6)
    v_star = (cfg.beta_u / (3 * cfg.alpha_u)) ** 0.25
    assert np.allclose(out.traj.speed[1:], v_star, atol=0.2)
    assert check_solution(out.traj, out.pw, cfg) == []


def test_block_improves_default_init(default_cfg):
    traj, pw = init_solution(default_cfg)
    before = evaluate_solution(traj, pw, default_cfg).ratio
    out = solve_power_speed(traj, pw, default_cfg)
    assert out.converged
    assert out.ratio > before
    assert check_solution(out.traj, out.pw, default_cfg) == []
    lams = np.append(out.lambdas, out.lam)
    assert np.all(np.diff(lams) >= -1e-9 * (1 + np.abs(lams[:-1])))


def test_zero_radius_less_conservative(default_cfg):
    traj, pw = init_solution(default_cfg)
    robust = solve_power_speed(traj, pw, default_cfg, lam=0.0)
    nominal_cfg = default_cfg.with_radii(0.0)
    nominal = solve_power_speed(traj, pw, nominal_cfg, lam=0.0)
    assert (evaluate_solution(nominal.traj, nominal.pw, nominal_cfg).secrecy_sum
            >= evaluate_solution(robust.traj, robust.pw, default_cfg).secrecy_sum - 1e-6)


def test_tangent_adversary_model_is_feasible_and_no_better(default_cfg):
    traj, pw = init_solution(default_cfg)
    exact = solve_power_speed(traj, pw, default_cfg, lam=0.0)
    tangent = solve_power_speed(traj, pw, default_cfg, lam=0.0, adv_model="tangent", max_iter=10)
    assert check_solution(tangent.traj, tangent.pw, default_cfg) == []
    s_exact = evaluate_solution(exact.traj, exact.pw, default_cfg).secrecy_sum
    s_tan = evaluate_solution(tangent.traj, tangent.pw, default_cfg).secrecy_sum
    assert s_tan <= s_exact + 1e-4
    with pytest.raises(ValueError):
        build_power_speed_model(traj, pw, default_cfg, 0.0, adv_model="bogus")


def _bs_limited():
    # far BS, close user: the last causality constraint binds and p_b water-fills
    cfg = default_config(slots_N=3, horizon_T=6.0, adversaries=[], user_pos=[60.0, 0.0], bs_pos=[-2000.0, 0.0])
    traj = _path([[-150.0, 0.0], [-50.0, 0.0], [40.0, 0.0]], cfg)
    return cfg, traj


def test_kkt_water_filling_bs_side():
    cfg, traj = _bs_limited()
    model = build_power_speed_model(traj, _flat(cfg), cfg, 0.0)
    res = model.prog.solve()
    rep = kkt_diagnostics(model, res)
    assert rep.stationarity <= 1e-6 and rep.complementarity <= 1e-6
    assert rep.icc_ok(1e-8)
    assert rep.icc_duals[-1] == pytest.approx(1.0, abs=1e-6)
    g = channel_gain(traj.pos[:2], cfg.bs_pos, cfg) / cfg.noise_power
    want = _water_fill(g, 2 * cfg.p_b_avg)
    assert np.allclose(res.value(model.vars["p_b"]), want, rtol=1e-4)
    # rate marginal values equal the price of BS power
    assert np.allclose(rep.kappa_b, 1.0, atol=1e-6)


def test_kkt_water_filling_user_side():
    # near BS: causality slack, the user link water-fills its average budget
    cfg = default_config(slots_N=3, horizon_T=6.0, adversaries=[], user_pos=[60.0, 0.0], bs_pos=[-400.0, 0.0])
    traj = _path([[-150.0, 0.0], [-50.0, 0.0], [40.0, 0.0]], cfg)
    model = build_power_speed_model(traj, _flat(cfg), cfg, 0.0)
    res = model.prog.solve()
    rep = kkt_diagnostics(model, res)
    assert rep.stationarity <= 1e-6 and rep.complementarity <= 1e-6
    assert np.all(np.abs(rep.icc_duals) <= 1e-6)
    g = channel_gain(traj.pos[1:], cfg.user_pos, cfg) / cfg.noise_power
    want = _water_fill(g, 2 * cfg.p_u_avg)
    assert np.allclose(res.value(model.vars["p_u"]), want, rtol=1e-4)


def test_kkt_perturbation_grows_residual():
    cfg, traj = _bs_limited()
    model = build_power_speed_model(traj, _flat(cfg), cfg, 0.0)
    res = model.prog.solve()
    idx = next(iter(model.vars["p_b"][0].terms))
    resid = []
    for delta in (1e-3, 1e-2, 1e-1):
        x = res.primal.copy()
        x[idx] += delta
        resid.append(abs(kkt_diagnostics(model, res, primal=x).reduced_p_b[0]))
    assert resid[0] < resid[1] < resid[2]
    # first order in the perturbation
    assert resid[2] / resid[1] == pytest.approx(10.0, rel=0.2)


def test_extracted_powers_meet_causality(default_cfg):
    traj, pw = init_solution(default_cfg)
    out = solve_power_speed(traj, pw, default_cfg, max_iter=3)
    rep = evaluate_solution(out.traj, out.pw, default_cfg)
    assert icc_check(rep.r_b, rep.r_u, 1e-9)
