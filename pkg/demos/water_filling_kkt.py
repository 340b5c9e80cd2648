"""Power/speed block on a three-slot instance with a closed-form answer.

With a far BS and no adversary, the relay is starved, so the final
causality constraint binds and the BS powers water-fill their average budget.
"""

import numpy as np
from scipy.optimize import brentq

from secrel import default_config
from secrel.power_speed import build_power_speed_model, kkt_diagnostics
from secrel.scenario import PowerSchedule, Trajectory, channel_gain, segment_lengths


def main():
    cfg = default_config(slots_N=3, horizon_T=6.0, adversaries=[], user_pos=[60.0, 0.0], bs_pos=[-2000.0, 0.0])
    pos = np.array([[-150.0, 0.0], [-50.0, 0.0], [40.0, 0.0]])
    L = segment_lengths(pos)
    traj = Trajectory(pos, np.r_[L, L[-1]] / cfg.slot_len, np.zeros(3))
    pw = PowerSchedule([cfg.p_b_avg, cfg.p_b_avg, 0.0], [0.0, cfg.p_u_avg, cfg.p_u_avg])

    model = build_power_speed_model(traj, pw, cfg, lam=0.0)
    res = model.prog.solve()
    rep = kkt_diagnostics(model, res)

    g = channel_gain(pos[:2], cfg.bs_pos, cfg) / cfg.noise_power
    level = brentq(lambda m: np.maximum(m - 1 / g, 0).sum() - 2 * cfg.p_b_avg, 0, 100)
    print("p_b solver      ", res.value(model.vars["p_b"]))
    print("p_b water-fill  ", np.maximum(level - 1 / g, 0))
    print("ICC multipliers ", np.asarray(rep.icc_duals))
    print(f"stationarity {rep.stationarity:.2e}  complementarity {rep.complementarity:.2e}")


if __name__ == "__main__":
    main()
