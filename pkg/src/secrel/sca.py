"""Convexification primitives: tangent bounds and the Dinkelbach controller."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

LN2 = np.log(2.0)


def taylor_log_lower(p, w_star, w):
    """First-order bound of log2(1 + p/w) around ``w_star``.

    log2(1 + p/w) is convex in w > 0, so its tangent is a global lower bound:

        L(w) = log2(1 + p/w*) + p (w* - w) / (w* (w* + p) ln 2)

    Returns ``(L(w), (intercept, slope))`` with L(w) = intercept + slope * w.
    """
    p = np.asarray(p, dtype=float)
    w_star = np.asarray(w_star, dtype=float)
    if np.any(w_star <= 0):
        raise ValueError("expansion point must be positive")
    if np.any(p < 0):
        raise ValueError("p must be nonnegative")
    slope = -p / (w_star * (w_star + p) * LN2)
    intercept = np.log2(1.0 + p / w_star) - slope * w_star
    bound = intercept + slope * np.asarray(w, dtype=float)
    return _scalar(bound), (_scalar(intercept), _scalar(slope))


def taylor_square_lower(x_star, x):
    """Tangent of x^2 at ``x_star``: 2 x* x - x*^2 <= x^2.

    Returns ``(bound, (intercept, slope))``.
    """
    x_star = np.asarray(x_star, dtype=float)
    slope = 2.0 * x_star
    intercept = -x_star ** 2
    return _scalar(intercept + slope * np.asarray(x, dtype=float)), (_scalar(intercept), _scalar(slope))


def _scalar(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def dinkelbach_update(numerator: float, denominator: float) -> float:
    if not denominator > 0:
        raise ValueError("Dinkelbach denominator must be positive")
    return numerator / denominator


class DinkelbachError(RuntimeError):
    def __init__(self, iteration: int, cause: BaseException):
        super().__init__(f"inner solve failed at Dinkelbach iteration {iteration}: {cause}")
        self.iteration = iteration


@dataclass
class DinkelbachStep:
    iteration: int
    lam: float
    F: float
    numerator: float
    denominator: float
    ratio: float


@dataclass
class DinkelbachResult:
    candidate: Any
    lam: float
    converged: bool
    steps: list[DinkelbachStep] = field(default_factory=list)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([s.lam for s in self.steps])

    @property
    def F_values(self) -> np.ndarray:
        return np.array([s.F for s in self.steps])

    def lam_nondecreasing(self, slack: float = 1e-9) -> bool:
        lams = np.append(self.lambdas, self.lam)
        return bool(np.all(np.diff(lams) >= -slack * (1 + np.abs(lams[:-1]))))


def dinkelbach_loop(
    inner_solver: Callable[[float], tuple[float, Any]],
    fraction: Callable[[Any], tuple[float, float]],
    lam0: float,
    tol: float = 1e-4,
    max_iter: int = 30,
) -> DinkelbachResult:
    """Maximize numerator/denominator by parametric subproblems.

    ``inner_solver(lam)`` returns ``(F, candidate)`` where F is the optimal
    value of max numerator - lam * denominator over its (convexified)
    model, and ``fraction(candidate)`` gives the candidate's true
    (numerator, denominator).  Stops once |F| <= tol.
    """
    lam = float(lam0)
    steps: list[DinkelbachStep] = []
    candidate = None
    for k in range(max_iter):
        try:
            F, candidate = inner_solver(lam)
        except Exception as exc:
            raise DinkelbachError(k, exc) from exc
        num, den = fraction(candidate)
        ratio = dinkelbach_update(num, den)
        steps.append(DinkelbachStep(k, lam, float(F), float(num), float(den), ratio))
        if abs(F) <= tol:
            return DinkelbachResult(candidate, ratio, True, steps)
        lam = ratio
    return DinkelbachResult(candidate, lam, False, steps)
