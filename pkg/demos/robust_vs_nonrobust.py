"""Optimize the default scenario with and without the uncertainty disks.

Both paths are then scored against adversaries placed at their worst
sampled points inside the nominal 60 m / 30 m disks.
"""

from secrel import default_config, evaluate_solution, run_algorithm1
from secrel.pipeline import circular_baseline, disk_clearance
from secrel.robust import sampled_worst_secrecy


def main():
    nominal = default_config()
    for label, cfg in (("robust R=60/30", nominal), ("non-robust R=0", nominal.with_radii(0.0))):
        traj, pw, trace = run_algorithm1(cfg)
        rep = evaluate_solution(traj, pw, cfg)
        worst = sampled_worst_secrecy(traj.pos, pw.p_u, nominal)[1:].sum()
        print(f"{label:16s} EE {rep.ee_kbits_per_J:8.3f} kbits/J  outer iterations {len(trace.rows) - 1:2d}  "
              f"clearance {disk_clearance(traj, pw, nominal):7.1f} m  sampled worst-case secrecy {worst:.3f}")
    base = circular_baseline(nominal)
    print(f"{'circle baseline':16s} EE {base.ee_kbits_per_J:8.3f} kbits/J  radius {base.radius:.0f} m, "
          f"speed {base.speed:.1f} m/s")


if __name__ == "__main__":
    main()
