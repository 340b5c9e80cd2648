"""Dinkelbach/SCA driver shared by the two optimization blocks."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .sca import DinkelbachError, dinkelbach_loop
from .scenario import PowerSchedule, ScenarioConfig, Trajectory, evaluate_solution

SOLVER_TOL = 1e-8
RETRY_TOL = 1e-6  # candidates are repaired to exact feasibility afterwards


@dataclass
class BlockResult:
    """Outcome of one block solve: the best true-ratio candidate seen."""

    traj: Trajectory
    pw: PowerSchedule
    converged: bool
    iterations: int
    lam: float
    ratio: float
    trace: list[dict] = field(default_factory=list)
    message: str = ""

    @property
    def speeds(self) -> np.ndarray:
        return self.traj.speed

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([row["lam"] for row in self.trace])

    @property
    def F_values(self) -> np.ndarray:
        return np.array([row["F"] for row in self.trace])


class BlockSolveError(RuntimeError):
    pass


def true_fraction(cfg: ScenarioConfig):
    def fraction(cand):
        rep = evaluate_solution(cand[0], cand[1], cfg)
        return rep.secrecy_sum, rep.power_sum

    return fraction


EXTRAPOLATION = (1.0, 3.0, 7.0, 15.0)


def _extrapolate(model, cand, num, den, lam_k, fraction):
    """Over-relaxation: keep longer steps while they raise the true objective."""
    step = getattr(model, "extrapolate", None)
    if step is None:
        return cand, num, den
    best = (cand, num, den)
    for theta in EXTRAPOLATION:
        trial = step(cand, theta)
        if trial is None:
            break
        tn, td = fraction(trial)
        if tn - lam_k * td <= best[1] - lam_k * best[2]:
            break
        best = (trial, tn, td)
    return best


def run_block(build: Callable, traj: Trajectory, pw: PowerSchedule, cfg: ScenarioConfig, *,
              lam: float | None = None, max_iter: int = 30, backend: str = "clarabel") -> BlockResult:
    """Dinkelbach iterations over re-expanded convex surrogates.

    ``build(traj, pw, lam)`` returns a model exposing ``prog``,
    ``extract(result)`` and ``surrogate_parts(result)``.  Each inner solve
    expands the surrogate at the previous candidate; F is the surrogate
    secrecy minus lam times surrogate energy, per transmitting slot.

    With ``lam`` given the parameter stays fixed and passes continue until
    the true objective gains less than sca_tol * (1 + |objective|).
    """
    M = cfg.N - 1
    fraction = true_fraction(cfg)
    num0, den0 = fraction((traj, pw))
    ratio0 = num0 / den0
    rows: list[dict] = []
    state = {"cur": (traj, pw), "best": (traj, pw), "ratio": ratio0,
             "obj": None if lam is None else (num0 - lam * den0) / M}

    def inner(lam_k):
        # the optimal ratio is >= 0 (zero UAV power), and a negative
        # parameter would reward energy, making the epigraphs unbounded
        lam_k = max(float(lam_k), 0.0)
        t0 = time.perf_counter()
        model = build(*state["cur"], lam_k)
        res = model.prog.solve(SOLVER_TOL, backend=backend)
        if res.status == "numerical-failure":
            res = model.prog.solve(RETRY_TOL, backend=backend)
        if not res.ok:
            raise BlockSolveError(f"conic solve {res.status} ({res.detail})")
        cand = model.extract(res)
        snum, sden = model.surrogate_parts(res)
        F = (snum - lam_k * sden) / M
        num, den = fraction(cand)
        cand, num, den = _extrapolate(model, cand, num, den, lam_k, fraction)
        rows.append(dict(iteration=len(rows), lam=float(lam_k), F=float(F), ratio=num / den,
                         secrecy=num, power=den, residual=float(res.primal_residual),
                         solver_iters=int(res.iterations), time=time.perf_counter() - t0))
        state["cur"] = cand
        if lam is None:
            if num / den > state["ratio"]:
                state["best"], state["ratio"] = cand, num / den
        elif (num - lam * den) / M > state["obj"]:
            state["best"], state["obj"], state["ratio"] = cand, (num - lam * den) / M, num / den
        return F, cand

    tol = cfg.tolerances
    converged, message, lam_out = False, "", lam
    try:
        if lam is None:
            out = dinkelbach_loop(inner, fraction, max(ratio0, 0.0), tol.dinkelbach_tol, max_iter)
            converged, lam_out = out.converged, max(out.lam, 0.0)
        else:
            prev = state["obj"]
            for _ in range(max_iter):
                inner(lam)
                obj = state["obj"]
                if obj - prev < tol.sca_tol * (1 + abs(obj)):
                    converged = True
                    break
                prev = obj
    except DinkelbachError as exc:
        message = str(exc)
        lam_out = state["ratio"]
    except BlockSolveError as exc:
        message = str(exc)
    best = state["best"]
    return BlockResult(best[0], best[1], converged, len(rows), float(lam_out), float(state["ratio"]), rows, message)
