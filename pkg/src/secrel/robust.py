"""Worst-case adversary modeling over circular location uncertainty.

An adversary is known only to lie in a disk of radius R around an
estimated position.  The strongest eavesdropping channel places it at the
disk point closest to the UAV's ground projection, which gives a closed
form.  The S-procedure turns the "for every point of the disk" distance
requirement into a single 3x3 linear matrix inequality.  Sampling oracles
here certify both independently.
"""

from __future__ import annotations

import numpy as np

from .scenario import AdversaryRegion, ScenarioConfig, channel_gain


def worstcase_adv_gain(uav_pos, adv: AdversaryRegion, cfg: ScenarioConfig):
    """Largest channel gain an adversary anywhere in its disk can see.

    beta0/H^2 when the UAV is over the disk, beta0/((d-R)^2 + H^2) otherwise,
    with d the horizontal distance to the disk center.
    """
    uav_pos = np.asarray(uav_pos, dtype=float)
    d = np.linalg.norm(uav_pos - np.asarray(adv.est_pos), axis=-1)
    gap = np.maximum(d - adv.radius_R, 0.0)
    out = cfg.beta0 / (gap ** 2 + cfg.altitude_H ** 2)
    return out if np.ndim(out) else float(out)


def worstcase_sq_distance(uav_pos, adv: AdversaryRegion, cfg: ScenarioConfig):
    """Smallest squared UAV-adversary distance (3-D) over the disk."""
    return cfg.beta0 / worstcase_adv_gain(uav_pos, adv, cfg)


def disk_points(center, radius: float, n_samples: int, seed: int = 0) -> np.ndarray:
    """Quasi-uniform points covering a closed disk.

    A sunflower spiral fills the interior; the center and a ring on the
    boundary are always included.  A seeded rotation makes the set
    reproducible but not aligned with the axes.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    center = np.asarray(center, dtype=float)
    if radius == 0:
        return center[None, :].copy()
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0, 2 * np.pi)
    n_ring = max(1, min(n_samples // 4, 4096)) if n_samples > 1 else 0
    n_fill = n_samples - n_ring - 1
    pts = [np.zeros((1, 2))]
    if n_ring:
        ang = phase + 2 * np.pi * np.arange(n_ring) / n_ring
        pts.append(radius * np.column_stack([np.cos(ang), np.sin(ang)]))
    if n_fill > 0:
        k = np.arange(1, n_fill + 1)
        r = radius * np.sqrt(k / n_fill)
        ang = phase + k * np.pi * (3 - np.sqrt(5))
        pts.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
    return center + np.vstack(pts)


def sample_adv_gain_max(uav_pos, adv: AdversaryRegion, cfg: ScenarioConfig, n_samples: int = 100_000, seed: int = 0) -> float:
    """Brute-force maximum of the UAV-adversary gain over sampled disk points."""
    pts = disk_points(adv.est_pos, adv.radius_R, n_samples, seed)
    return float(np.max(channel_gain(np.asarray(uav_pos, dtype=float), pts, cfg)))


def build_sproc_lmi(uav_pos, adv: AdversaryRegion, z: float, eps: float, cfg: ScenarioConfig) -> np.ndarray:
    """S-procedure certificate matrix for the worst-case distance bound.

    M = [[eps+1, 0, xa-x], [0, eps+1, ya-y], [xa-x, ya-y, m]] with
    m = (x-xa)^2 + (y-ya)^2 + H^2 - z - R^2 eps.  M >= 0 together with
    eps >= 0 guarantees squared distance + H^2 >= z for every point of the disk.
    """
    if eps < 0:
        raise ValueError("S-procedure multiplier must be nonnegative")
    x, y = np.asarray(uav_pos, dtype=float)
    xa, ya = adv.est_pos
    m = (x - xa) ** 2 + (y - ya) ** 2 + cfg.altitude_H ** 2 - z - adv.radius_R ** 2 * eps
    return np.array(
        [
            [eps + 1.0, 0.0, xa - x],
            [0.0, eps + 1.0, ya - y],
            [xa - x, ya - y, m],
        ]
    )


def psd_threshold(mat: np.ndarray, psd_tol: float) -> float:
    """Eigenvalue floor for calling a matrix PSD, scaled by its size."""
    return psd_tol * max(1.0, float(np.abs(np.trace(mat))))


def is_psd(mat: np.ndarray, psd_tol: float = 1e-8) -> bool:
    return bool(np.linalg.eigvalsh(mat)[0] >= -psd_threshold(mat, psd_tol))


def certify_sproc(uav_pos, adv: AdversaryRegion, z: float, eps: float, cfg: ScenarioConfig,
                  n_samples: int = 1000, seed: int = 0, tol: float | None = None) -> bool:
    """Sampling check of the distance bound the S-procedure matrix claims.

    Passes iff every sampled adversary location satisfies
    |uav - (center + delta)|^2 + H^2 >= z - tol.  The default ``tol`` is the
    slack an eigenvalue at the PSD threshold can leak into the quadratic
    form over the disk, psd_threshold * (1 + R^2).
    """
    if tol is None:
        mat = build_sproc_lmi(uav_pos, adv, z, max(eps, 0.0), cfg)
        tol = psd_threshold(mat, cfg.tolerances.psd_tol) * (1.0 + adv.radius_R ** 2)
    pts = disk_points(adv.est_pos, adv.radius_R, n_samples, seed)
    d2 = np.sum((np.asarray(uav_pos, dtype=float) - pts) ** 2, axis=1) + cfg.altitude_H ** 2
    return bool(np.all(d2 >= z - tol))


def sampled_worst_secrecy(traj_pos, p_u, cfg: ScenarioConfig, n_samples: int = 2000, seed: int = 0) -> np.ndarray:
    """Per-slot secrecy with each adversary at its worst sampled disk location.

    The disks are taken from ``cfg``; pass the nominal scenario here when
    judging a solution that was optimized under different radii.
    """
    pos = np.asarray(traj_pos, dtype=float)
    p_u = np.asarray(p_u, dtype=float)
    ru = np.log2(1 + p_u * channel_gain(pos, cfg.user_pos, cfg) / cfg.noise_power)
    worst = np.zeros(len(pos))
    for k, adv in enumerate(cfg.adversaries):
        pts = disk_points(adv.est_pos, adv.radius_R, n_samples, seed + k)
        g = channel_gain(pos[:, None, :], pts[None, :, :], cfg).max(axis=1)
        worst = np.maximum(worst, np.log2(1 + p_u * g / cfg.noise_power))
    out = ru - worst
    out[0] = 0.0
    return out


def solve_sproc_bound(uav_pos, adv: AdversaryRegion, cfg: ScenarioConfig, tol: float = 1e-9):
    """Largest z the S-procedure certifies, by a small SDP.

    Maximizes z over (z, eps >= 0) subject to the certificate matrix being
    PSD.  Returns ``(z, eps)``; z matches :func:`worstcase_sq_distance` up to
    solver accuracy.  Lengths are scaled by H inside the program.
    """
    from .conic import ConicProgram

    L0 = cfg.altitude_H
    x, y = np.asarray(uav_pos, dtype=float) / L0
    xa, ya = np.asarray(adv.est_pos) / L0
    R = adv.radius_R / L0
    prog = ConicProgram()
    z = prog.variable("z")
    eps = prog.variable("eps", lb=0.0)
    m = (x - xa) ** 2 + (y - ya) ** 2 + 1.0 - z - R ** 2 * eps
    prog.add_psd([[eps + 1.0, 0.0, xa - x], [0.0, eps + 1.0, ya - y], [xa - x, ya - y, m]], name="lmi")
    prog.maximize(z)
    res = prog.solve(tol)
    if not res.ok:
        raise RuntimeError(f"S-procedure SDP {res.status}")
    return res.value(z) * L0 ** 2, max(res.value(eps), 0.0)
