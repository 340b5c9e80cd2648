"""Physical model of the UAV relay link.

Geometry, slot discretization, LOS channel gains, link rates, the
information-causality bookkeeping and the fixed-wing propulsion power
model.  Everything here is a pure function of immutable values.

Slots are numbered 1..N in the docstrings; arrays are 0-based, so slot
``n`` lives at index ``n - 1``.  Slot 1 carries BS->UAV traffic only and
slot N carries UAV->user traffic only.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from typing import Any, Sequence

import numpy as np

LN2 = np.log(2.0)


class ScenarioError(ValueError):
    """Invalid configuration or invariant violation.

    ``field`` names the offending configuration key or solution slot.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class AdversaryRegion:
    est_pos: tuple[float, float]
    radius_R: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "est_pos", tuple(float(c) for c in self.est_pos))
        if len(self.est_pos) != 2:
            raise ScenarioError("est_pos must have two coordinates", "adversaries")
        if not self.radius_R >= 0:
            raise ScenarioError("radius_R must be >= 0", "adversaries")


@dataclass(frozen=True)
class ToleranceSet:
    feasibility_tol: float = 1e-6
    dinkelbach_tol: float = 1e-4
    sca_tol: float = 1e-6
    psd_tol: float = 1e-8

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ScenarioError(f"{f.name} must be > 0", f.name)


@dataclass(frozen=True)
class ScenarioConfig:
    bs_pos: tuple[float, float]
    user_pos: tuple[float, float]
    adversaries: tuple[AdversaryRegion, ...]
    altitude_H: float
    horizon_T: float
    slots_N: int
    beta0: float
    noise_power: float
    p_b_max: float
    p_b_avg: float
    p_u_max: float
    p_u_avg: float
    v_min: float
    v_max: float
    a_max: float
    alpha_u: float
    beta_u: float
    mass_m: float
    gravity_g: float
    bandwidth_B: float
    tolerances: ToleranceSet = field(default_factory=ToleranceSet)

    def __post_init__(self):
        object.__setattr__(self, "bs_pos", tuple(float(c) for c in self.bs_pos))
        object.__setattr__(self, "user_pos", tuple(float(c) for c in self.user_pos))
        object.__setattr__(self, "adversaries", tuple(self.adversaries))
        self._check()

    def _check(self):
        def need(ok, name, msg):
            if not ok:
                raise ScenarioError(f"{name}: {msg}", name)

        need(len(self.bs_pos) == 2, "bs_pos", "expected two coordinates")
        need(len(self.user_pos) == 2, "user_pos", "expected two coordinates")
        need(int(self.slots_N) == self.slots_N and self.slots_N >= 3, "slots_N", "must be an integer >= 3")
        need(self.horizon_T > 0, "horizon_T", "must be > 0")
        need(self.altitude_H > 0, "altitude_H", "must be > 0")
        need(self.beta0 > 0, "beta0", "must be > 0")
        need(self.noise_power > 0, "noise_power", "must be > 0")
        need(self.v_min > 0, "v_min", "must be > 0")
        need(self.v_min <= self.v_max, "v_max", "must be >= v_min")
        need(self.a_max >= 0, "a_max", "must be >= 0")
        for name in ("p_b_max", "p_b_avg", "p_u_max", "p_u_avg"):
            need(getattr(self, name) >= 0, name, "must be >= 0")
        need(self.p_b_avg <= self.p_b_max, "p_b_avg", "must be <= p_b_max")
        need(self.p_u_avg <= self.p_u_max, "p_u_avg", "must be <= p_u_max")
        for name in ("alpha_u", "beta_u", "gravity_g", "bandwidth_B"):
            need(getattr(self, name) > 0, name, "must be > 0")
        need(self.mass_m >= 0, "mass_m", "must be >= 0")

    @property
    def N(self) -> int:
        return int(self.slots_N)

    @property
    def slot_len(self) -> float:
        """Slot duration in seconds."""
        return self.horizon_T / self.slots_N

    @property
    def snr_ref(self) -> float:
        """beta0 / noise power: SNR per watt at 1 m."""
        return self.beta0 / self.noise_power

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        """Build a config; keys missing from ``data`` take the packaged defaults."""
        merged = dict(_default_dict())
        known = {f.name for f in fields(cls)}
        for key, value in data.items():
            if key not in known:
                raise ScenarioError(f"unknown config key {key!r}", key)
            merged[key] = value
        tol = merged["tolerances"]
        if isinstance(tol, dict):
            defaults = _default_dict()["tolerances"]
            unknown = set(tol) - set(defaults)
            if unknown:
                name = sorted(unknown)[0]
                raise ScenarioError(f"unknown tolerance key {name!r}", name)
            tol = ToleranceSet(**{**defaults, **tol})
        advs = tuple(
            a if isinstance(a, AdversaryRegion) else AdversaryRegion(**a) for a in merged["adversaries"]
        )
        merged.update(tolerances=tol, adversaries=advs)
        try:
            merged["slots_N"] = _as_int(merged["slots_N"])
        except (TypeError, ValueError):
            raise ScenarioError("slots_N: must be an integer >= 3", "slots_N") from None
        for key in known - {"bs_pos", "user_pos", "adversaries", "tolerances", "slots_N"}:
            if isinstance(merged[key], bool) or not isinstance(merged[key], (int, float)):
                raise ScenarioError(f"{key}: expected a number", key)
        return cls(**merged)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["bs_pos"] = list(self.bs_pos)
        out["user_pos"] = list(self.user_pos)
        out["adversaries"] = [
            {"est_pos": list(a.est_pos), "radius_R": a.radius_R} for a in self.adversaries
        ]
        return out

    def with_radii(self, radii: float | Sequence[float]) -> "ScenarioConfig":
        """Copy with adversary radii replaced (scalar applies to all)."""
        if np.isscalar(radii):
            radii = [float(radii)] * len(self.adversaries)
        advs = tuple(replace(a, radius_R=float(r)) for a, r in zip(self.adversaries, radii))
        return replace(self, adversaries=advs)

    def replace(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def _as_int(value) -> int:
    if isinstance(value, bool):
        raise TypeError
    if isinstance(value, float) and not value.is_integer():
        raise ValueError
    return int(value)


_DEFAULTS: dict[str, Any] | None = None


def _default_dict() -> dict[str, Any]:
    global _DEFAULTS
    if _DEFAULTS is None:
        text = resources.files("secrel.data").joinpath("default_config.json").read_text()
        _DEFAULTS = json.loads(text)
    return json.loads(json.dumps(_DEFAULTS))


def default_config(**overrides) -> ScenarioConfig:
    return ScenarioConfig.from_dict(overrides)


@dataclass(frozen=True)
class Trajectory:
    """Per-slot positions (N, 2), scalar speeds and tangential accelerations."""

    pos: np.ndarray
    speed: np.ndarray
    accel: np.ndarray

    def __post_init__(self):
        for name in ("pos", "speed", "accel"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.speed)
        if self.pos.shape != (n, 2) or self.accel.shape != (n,):
            raise ScenarioError("trajectory arrays must share length N", "trajectory")

    def __len__(self):
        return len(self.speed)


@dataclass(frozen=True)
class PowerSchedule:
    p_b: np.ndarray
    p_u: np.ndarray

    def __post_init__(self):
        for name in ("p_b", "p_u"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.p_b.shape != self.p_u.shape or self.p_b.ndim != 1:
            raise ScenarioError("power arrays must share length N", "powers")


def channel_gain(uav_pos, target_pos, cfg: ScenarioConfig):
    """LOS power gain beta0 / (horizontal distance^2 + H^2); broadcasts over leading axes."""
    d = np.asarray(uav_pos, dtype=float) - np.asarray(target_pos, dtype=float)
    return cfg.beta0 / (np.sum(d * d, axis=-1) + cfg.altitude_H ** 2)


def link_rate(power, gain, noise):
    """Spectral efficiency log2(1 + power * gain / noise) in bits/s/Hz."""
    power = np.asarray(power, dtype=float)
    if np.any(power < 0):
        raise ValueError("transmit power must be nonnegative")
    out = np.log2(1.0 + power * np.asarray(gain, dtype=float) / noise)
    return out if out.ndim else float(out)


def propulsion_power(speed, accel, kinetic_delta, cfg: ScenarioConfig):
    """Fixed-wing propulsion power in W.

    alpha*v^3 + beta/v + beta*a^2/(v*g^2) + dK/slot_len, where the kinetic
    energy change ``kinetic_delta`` (J) is supplied by the caller.
    """
    v = np.asarray(speed, dtype=float)
    if np.any(v <= 0):
        raise ValueError("propulsion model is singular for speed <= 0")
    a = np.asarray(accel, dtype=float)
    out = (
        cfg.alpha_u * v ** 3
        + cfg.beta_u / v
        + cfg.beta_u * a ** 2 / (v * cfg.gravity_g ** 2)
        + np.asarray(kinetic_delta, dtype=float) / cfg.slot_len
    )
    return out if out.ndim else float(out)


def kinetic_deltas(speed, cfg: ScenarioConfig) -> np.ndarray:
    """Per-slot kinetic energy change; slot 2 is zero (pre-horizon speed taken as v[2])."""
    v = np.asarray(speed, dtype=float)
    dk = np.zeros_like(v)
    dk[2:] = 0.5 * cfg.mass_m * (v[2:] ** 2 - v[1:-1] ** 2)
    return dk


def segment_lengths(pos) -> np.ndarray:
    """Horizontal displacement of segments 1..N-1."""
    return np.linalg.norm(np.diff(np.asarray(pos, dtype=float), axis=0), axis=1)


def mobility_residual(traj: Trajectory, cfg: ScenarioConfig) -> np.ndarray:
    """|pos[n+1]-pos[n]| - (rho*v[n] + rho^2*a[n]/2) for n = 1..N-1."""
    rho = cfg.slot_len
    travelled = rho * traj.speed[:-1] + 0.5 * rho ** 2 * traj.accel[:-1]
    return segment_lengths(traj.pos) - travelled


def accel_from_segments(lengths, speeds, cfg: ScenarioConfig) -> np.ndarray:
    """Acceleration that makes the mobility equation exact for the given speeds."""
    rho = cfg.slot_len
    return 2.0 * (np.asarray(lengths) - rho * np.asarray(speeds)) / rho ** 2


@dataclass(frozen=True)
class IccVerdict:
    feasible: bool
    max_violation: float
    worst_slot: int | None

    def __bool__(self):
        return self.feasible


def icc_check(rates_b, rates_u, tol: float = 1e-6) -> IccVerdict:
    """Information causality: the relay forwards only what it already received.

    Requires r_u[1] = 0 and sum_{j=2..n} r_u[j] <= sum_{j=1..n-1} r_b[j] + tol
    for n = 2..N.  ``worst_slot`` is 1-based.
    """
    rb = np.asarray(rates_b, dtype=float)
    ru = np.asarray(rates_u, dtype=float)
    if rb.shape != ru.shape or rb.ndim != 1:
        raise ValueError("rate vectors must have equal length")
    viol = np.empty(len(ru))
    viol[0] = abs(ru[0])
    viol[1:] = np.cumsum(ru[1:]) - np.cumsum(rb[:-1])
    worst = int(np.argmax(viol))
    max_v = float(max(viol[worst], 0.0))
    ok = bool(viol[0] <= tol and np.all(viol[1:] <= tol))
    return IccVerdict(ok, max_v, worst + 1 if max_v > 0 else None)


def check_solution(traj: Trajectory, pw: PowerSchedule, cfg: ScenarioConfig, tol: float | None = None) -> list[str]:
    """List every violated invariant of a (trajectory, power) pair; empty when feasible.

    Messages name 1-based slots.  ICC is checked on the exact rates.
    """
    tol = cfg.tolerances.feasibility_tol if tol is None else tol
    N = cfg.N
    problems = []
    if len(traj) != N:
        return [f"trajectory has {len(traj)} slots, expected {N}"]
    if len(pw.p_b) != N:
        return [f"power schedule has {len(pw.p_b)} slots, expected {N}"]
    for i, v in enumerate(traj.speed):
        if not (cfg.v_min - tol <= v <= cfg.v_max + tol):
            problems.append(f"slot {i + 1}: speed {v:.6g} outside [{cfg.v_min}, {cfg.v_max}]")
    for i, a in enumerate(traj.accel):
        if abs(a) > cfg.a_max + tol:
            problems.append(f"slot {i + 1}: |accel| {abs(a):.6g} exceeds a_max {cfg.a_max}")
    for i, r in enumerate(mobility_residual(traj, cfg)):
        if abs(r) > tol:
            problems.append(f"slot {i + 1}: mobility residual {r:.3g}")
    if abs(pw.p_u[0]) > tol:
        problems.append("slot 1: p_u must be 0")
    if abs(pw.p_b[-1]) > tol:
        problems.append(f"slot {N}: p_b must be 0")
    for name, arr, top in (("p_b", pw.p_b, cfg.p_b_max), ("p_u", pw.p_u, cfg.p_u_max)):
        for i, p in enumerate(arr):
            if p < -tol or p > top * (1 + tol) + tol:
                problems.append(f"slot {i + 1}: {name} {p:.6g} outside [0, {top}]")
    if pw.p_b[:-1].mean() > cfg.p_b_avg * (1 + tol) + tol:
        problems.append(f"average p_b {pw.p_b[:-1].mean():.6g} exceeds {cfg.p_b_avg}")
    if pw.p_u[1:].mean() > cfg.p_u_avg * (1 + tol) + tol:
        problems.append(f"average p_u {pw.p_u[1:].mean():.6g} exceeds {cfg.p_u_avg}")
    rb, ru = _link_rates(traj, pw, cfg)
    verdict = icc_check(rb, ru, tol)
    if not verdict:
        problems.append(f"slot {verdict.worst_slot}: information causality violated by {verdict.max_violation:.3g}")
    return problems


def validate_solution(traj: Trajectory, pw: PowerSchedule, cfg: ScenarioConfig, tol: float | None = None):
    problems = check_solution(traj, pw, cfg, tol)
    if problems:
        raise ScenarioError("; ".join(problems), "solution")


def _link_rates(traj, pw, cfg):
    gb = channel_gain(traj.pos, cfg.bs_pos, cfg)
    gu = channel_gain(traj.pos, cfg.user_pos, cfg)
    rb = link_rate(np.maximum(pw.p_b, 0.0), gb, cfg.noise_power)
    ru = link_rate(np.maximum(pw.p_u, 0.0), gu, cfg.noise_power)
    return rb, ru


def worstcase_gains(pos, cfg: ScenarioConfig) -> np.ndarray:
    """(A, N) worst-case adversary gains along a path."""
    from .robust import worstcase_adv_gain

    pos = np.asarray(pos, dtype=float)
    if not cfg.adversaries:
        return np.zeros((0, len(pos)))
    return np.stack([worstcase_adv_gain(pos, adv, cfg) for adv in cfg.adversaries])


@dataclass(frozen=True)
class SolutionReport:
    r_b: np.ndarray
    r_u: np.ndarray
    r_a: np.ndarray  # (A, N) worst case per adversary
    secrecy: np.ndarray  # r_u - max_a r_a, unclamped; slot 1 is 0
    e_p: np.ndarray  # propulsion power, slot 1 is 0 (not counted)
    secrecy_bits: float
    energy_J: float
    ee_kbits_per_J: float
    ee_clamped_kbits_per_J: float
    ratio: float  # sum secrecy / sum power, the optimizer's objective units

    @property
    def secrecy_sum(self) -> float:
        return float(self.secrecy[1:].sum())

    @property
    def power_sum(self) -> float:
        return float(self.e_p[1:].sum())


def evaluate_solution(traj: Trajectory, pw: PowerSchedule, cfg: ScenarioConfig) -> SolutionReport:
    """Per-slot rates, worst-case secrecy, propulsion power and energy efficiency."""
    if len(traj) != cfg.N or len(pw.p_b) != cfg.N:
        raise ScenarioError("solution length does not match slots_N", "solution")
    rb, ru = _link_rates(traj, pw, cfg)
    ga = worstcase_gains(traj.pos, cfg)
    ra = link_rate(np.maximum(pw.p_u, 0.0)[None, :] * np.ones_like(ga), ga, cfg.noise_power)
    ra = np.atleast_2d(ra) if ga.size else np.zeros((0, cfg.N))
    ra_max = ra.max(axis=0) if len(ra) else np.zeros(cfg.N)
    secrecy = ru - ra_max
    secrecy[0] = 0.0
    e_p = np.zeros(cfg.N)
    e_p[1:] = propulsion_power(traj.speed[1:], traj.accel[1:], kinetic_deltas(traj.speed, cfg)[1:], cfg)
    rho, B = cfg.slot_len, cfg.bandwidth_B
    bits = rho * B * secrecy[1:].sum()
    clamped = rho * B * np.maximum(secrecy[1:], 0.0).sum()
    energy = rho * e_p[1:].sum()
    return SolutionReport(
        r_b=rb,
        r_u=ru,
        r_a=ra,
        secrecy=secrecy,
        e_p=e_p,
        secrecy_bits=float(bits),
        energy_J=float(energy),
        ee_kbits_per_J=float(bits / energy / 1e3),
        ee_clamped_kbits_per_J=float(clamped / energy / 1e3),
        ratio=float(secrecy[1:].sum() / e_p[1:].sum()),
    )


def trim_to_causality(traj: Trajectory, pw: PowerSchedule, cfg: ScenarioConfig, target_rates=None) -> PowerSchedule:
    """Lower UAV power so forwarding never outruns what has been received.

    With ``target_rates`` given, slot n forwards at most ``target_rates[n]``
    as well.  Power is only ever reduced, so all power constraints keep holding.
    """
    rb, ru = _link_rates(traj, pw, cfg)
    gu = channel_gain(traj.pos, cfg.user_pos, cfg)
    cap = ru.copy()
    if target_rates is not None:
        cap = np.minimum(cap, np.maximum(np.asarray(target_rates, dtype=float), 0.0))
    p_u = np.array(pw.p_u, dtype=float)
    p_u[0] = 0.0
    received = 0.0
    sent = 0.0
    for n in range(1, cfg.N):
        received += rb[n - 1]
        rate = min(cap[n], max(received - sent, 0.0))
        if rate < ru[n]:
            p_u[n] = min(p_u[n], (2.0 ** rate - 1.0) * cfg.noise_power / gu[n])
        sent += min(rate, ru[n])
    return PowerSchedule(pw.p_b, np.maximum(p_u, 0.0))
