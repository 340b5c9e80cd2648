"""Small conic-program builder with a native Clarabel backend.

A :class:`ConicProgram` holds scalar decision variables, affine expressions
over them, and constraints in five cones: linear equality, linear
inequality, second-order cone, exponential cone and small PSD cones.  The
objective is a linear form that is maximized.  Programs serialize to
plain dicts (JSON-safe) and dump to a line-oriented text format::

    # maximize: +1 x[0] +1 x[1]
    le c0: +1 x[0] -5 <= 0
    eq c1: +1 x[0] -1 x[1] == 0
    soc c2: || (+1 x[0]), (+1 x[1]) || <= (1)
    exp c3: ((+1 x[0]), (1), (+1 x[1])) in Kexp
    psd c4: [[(1), (+1 x[0])], [(+1 x[0]), (1)]] >= 0

Every line is ``<kind> <name>: <body>``; affine terms print as
``+coef x[index]`` followed by the constant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

LN2 = np.log(2.0)
SQRT2 = np.sqrt(2.0)


class Affine:
    """Sparse affine form sum(coef * x[i]) + const."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: dict[int, float] | None = None, const: float = 0.0):
        self.terms = terms if terms is not None else {}
        self.const = float(const)

    @staticmethod
    def of(value) -> "Affine":
        if isinstance(value, Affine):
            return value
        return Affine({}, float(value))

    def copy(self) -> "Affine":
        return Affine(dict(self.terms), self.const)

    def __add__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        other = Affine.of(other)
        terms = dict(self.terms)
        for i, c in other.terms.items():
            terms[i] = terms.get(i, 0.0) + c
        return Affine(terms, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return Affine({i: -c for i, c in self.terms.items()}, -self.const)

    def __sub__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        return self + (-Affine.of(other))

    def __rsub__(self, other):
        return Affine.of(other) - self

    def __mul__(self, k):
        if isinstance(k, (Affine, np.ndarray)):
            return NotImplemented
        k = float(k)
        return Affine({i: c * k for i, c in self.terms.items()}, self.const * k)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / float(k))

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(c * x[i] for i, c in self.terms.items())

    def __repr__(self):
        return _fmt(self)


def affine_sum(items: Iterable) -> Affine:
    out = Affine()
    for it in items:
        it = Affine.of(it)
        for i, c in it.terms.items():
            out.terms[i] = out.terms.get(i, 0.0) + c
        out.const += it.const
    return out


def dot(coefs: Sequence[float], exprs: Sequence) -> Affine:
    return affine_sum(Affine.of(e) * float(c) for c, e in zip(coefs, exprs))


@dataclass
class Constraint:
    kind: str  # eq | le | soc | exp | psd
    name: str
    exprs: list[Affine]
    size: int = 0  # matrix order for psd


KINDS = ("eq", "le", "soc", "exp", "psd")


class ConicProgram:
    def __init__(self):
        self.var_names: list[str] = []
        self.constraints: list[Constraint] = []
        self.objective = Affine()
        self._names: set[str] = set()

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    # -- variables --------------------------------------------------------
    def variable(self, name: str, size: int | None = None, lb: float | None = None, ub: float | None = None):
        """New scalar (size None) or 1-D object array of scalar variables."""
        count = 1 if size is None else int(size)
        out = []
        for k in range(count):
            idx = self.num_vars
            self.var_names.append(name if size is None else f"{name}[{k}]")
            v = Affine({idx: 1.0})
            if lb is not None:
                self.add_le(float(lb) - v, name=f"{self.var_names[idx]}.lb")
            if ub is not None:
                self.add_le(v - float(ub), name=f"{self.var_names[idx]}.ub")
            out.append(v)
        if size is None:
            return out[0]
        arr = np.empty(count, dtype=object)
        arr[:] = out
        return arr

    # -- constraints ------------------------------------------------------
    def _add(self, kind, exprs, name, size=0) -> Constraint:
        if name is None:
            name = f"c{len(self.constraints)}"
        if name in self._names:
            raise ValueError(f"duplicate constraint name {name!r}")
        exprs = [Affine.of(e) for e in exprs]
        for e in exprs:
            for i in e.terms:
                if not 0 <= i < self.num_vars:
                    raise ValueError(f"constraint {name!r} references unknown variable {i}")
        self._names.add(name)
        con = Constraint(kind, name, exprs, size)
        self.constraints.append(con)
        return con

    def add_le(self, lhs, rhs=0.0, name=None) -> Constraint:
        return self._add("le", [Affine.of(lhs) - rhs], name)

    def add_ge(self, lhs, rhs=0.0, name=None) -> Constraint:
        return self._add("le", [Affine.of(rhs) - lhs], name)

    def add_eq(self, lhs, rhs=0.0, name=None) -> Constraint:
        return self._add("eq", [Affine.of(lhs) - rhs], name)

    def add_soc(self, t, xs, name=None) -> Constraint:
        """||xs||_2 <= t."""
        return self._add("soc", [t, *xs], name)

    def add_rsoc(self, xs, y, z, name=None) -> Constraint:
        """||xs||^2 <= y * z with y, z >= 0."""
        y, z = Affine.of(y), Affine.of(z)
        return self.add_soc(y + z, [2.0 * Affine.of(x) for x in xs] + [y - z], name)

    def add_sum_squares_le(self, xs, rhs, name=None) -> Constraint:
        """sum(xs^2) <= rhs."""
        return self.add_rsoc(xs, rhs, 1.0, name)

    def add_exp(self, x, y, z, name=None) -> Constraint:
        """(x, y, z) in the exponential cone: y * exp(x / y) <= z, y > 0."""
        return self._add("exp", [x, y, z], name)

    def add_psd(self, mat, name=None) -> Constraint:
        """Symmetric affine matrix >= 0; the upper triangle is used."""
        n = len(mat)
        exprs = [mat[i][j] for j in range(n) for i in range(j + 1)]
        return self._add("psd", exprs, name, size=n)

    def maximize(self, expr) -> None:
        self.objective = Affine.of(expr)

    def constraint(self, name: str) -> Constraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)

    # -- evaluation -------------------------------------------------------
    def violations(self, x: np.ndarray) -> dict[str, float]:
        """Primal violation of every constraint at ``x`` (0 when satisfied)."""
        return {c.name: _violation(c, x) for c in self.constraints}

    def max_violation(self, x: np.ndarray) -> float:
        return max((_violation(c, x) for c in self.constraints), default=0.0)

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        def enc(e: Affine):
            idx = sorted(e.terms)
            return [idx, [e.terms[i] for i in idx], e.const]

        return {
            "var_names": list(self.var_names),
            "objective": enc(self.objective),
            "constraints": [
                {"kind": c.kind, "name": c.name, "size": c.size, "exprs": [enc(e) for e in c.exprs]}
                for c in self.constraints
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConicProgram":
        def dec(item):
            idx, coef, const = item
            return Affine({int(i): float(c) for i, c in zip(idx, coef)}, const)

        prog = cls()
        prog.var_names = list(data["var_names"])
        prog.objective = dec(data["objective"])
        for c in data["constraints"]:
            if c["kind"] not in KINDS:
                raise ValueError(f"unknown constraint kind {c['kind']!r}")
            prog._add(c["kind"], [dec(e) for e in c["exprs"]], c["name"], c.get("size", 0))
        return prog

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ConicProgram":
        return cls.from_dict(json.loads(text))

    def dump_text(self) -> str:
        lines = [f"# variables: {self.num_vars}", f"# maximize: {_fmt(self.objective)}"]
        for c in self.constraints:
            e = c.exprs
            if c.kind == "le":
                body = f"{_fmt(e[0])} <= 0"
            elif c.kind == "eq":
                body = f"{_fmt(e[0])} == 0"
            elif c.kind == "soc":
                body = "|| " + ", ".join(f"({_fmt(x)})" for x in e[1:]) + f" || <= ({_fmt(e[0])})"
            elif c.kind == "exp":
                body = "(" + ", ".join(f"({_fmt(x)})" for x in e) + ") in Kexp"
            else:
                m = _unpack_triangle(e, c.size)
                rows = ["[" + ", ".join(f"({_fmt(m[i][j])})" for j in range(c.size)) + "]" for i in range(c.size)]
                body = "[" + ", ".join(rows) + "] >= 0"
            lines.append(f"{c.kind} {c.name}: {body}")
        return "\n".join(lines) + "\n"

    # -- solving ----------------------------------------------------------
    def solve(self, tol: float = 1e-8, backend: str = "clarabel", **kwargs) -> "SolveResult":
        if backend == "clarabel":
            return _solve_clarabel(self, tol, **kwargs)
        if backend.startswith("cvxpy"):
            solver = backend.split(":", 1)[1] if ":" in backend else "CLARABEL"
            return _solve_cvxpy(self, tol, solver, **kwargs)
        raise ValueError(f"unknown backend {backend!r}")


def _fmt(e: Affine) -> str:
    parts = [f"{c:+.17g} x[{i}]" for i, c in sorted(e.terms.items())]
    if e.const or not parts:
        parts.append(f"{e.const:+.17g}" if parts else f"{e.const:.17g}")
    return " ".join(parts)


def _unpack_triangle(exprs, n):
    m = [[None] * n for _ in range(n)]
    k = 0
    for j in range(n):
        for i in range(j + 1):
            m[i][j] = m[j][i] = exprs[k]
            k += 1
    return m


def _violation(c: Constraint, x: np.ndarray) -> float:
    vals = np.array([e.value(x) for e in c.exprs])
    if c.kind == "le":
        return max(vals[0], 0.0)
    if c.kind == "eq":
        return abs(vals[0])
    if c.kind == "soc":
        return max(np.linalg.norm(vals[1:]) - vals[0], 0.0)
    if c.kind == "exp":
        u, v, w = vals
        if v <= 0 or w <= 0:
            return max(-v, -w, 0.0) + max(u, 0.0) * (v <= 0)
        return max(u - v * np.log(w / v), 0.0)
    m = np.array([[0.0] * c.size for _ in range(c.size)])
    k = 0
    for j in range(c.size):
        for i in range(j + 1):
            m[i, j] = m[j, i] = vals[k]
            k += 1
    return max(-np.linalg.eigvalsh(m)[0], 0.0)


@dataclass
class SolveResult:
    status: str  # optimal | infeasible | unbounded | numerical-failure
    primal: np.ndarray | None
    duals: dict[str, np.ndarray] = field(default_factory=dict)
    objective_value: float = float("nan")
    primal_residual: float = float("nan")
    iterations: int = 0
    solve_time: float = 0.0
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def value(self, expr):
        """Evaluate an Affine (or array of them) at the primal solution."""
        if self.primal is None:
            raise ValueError(f"no primal solution (status {self.status})")
        if isinstance(expr, np.ndarray):
            return np.array([Affine.of(e).value(self.primal) for e in expr.ravel()]).reshape(expr.shape)
        return Affine.of(expr).value(self.primal)

    def dual(self, name: str):
        """Multiplier of a named constraint.

        For ``le``/``eq`` constraints g(x) <= 0 / == 0 this is mu with
        grad(objective) = sum mu * grad(g); inequality duals are >= 0.
        For cone constraints it is the dual cone element z with
        grad(objective) + sum <z, grad(expr)> = 0 (a full matrix for PSD).
        """
        d = self.duals[name]
        return float(d[0]) if d.shape == (1,) else d


_CLARABEL_STATUS = {
    "Solved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
}


def _assemble(prog: ConicProgram):
    """Clarabel standard form: A x + s = b, s in K; rows ordered by cone."""
    order = sorted(range(len(prog.constraints)), key=lambda k: {"eq": 0, "le": 1}.get(prog.constraints[k].kind, 2))
    rows, cols, vals, b = [], [], [], []
    slices = {}
    cones = []
    import clarabel

    r = 0
    n_eq = n_le = 0
    for k in order:
        c = prog.constraints[k]
        if c.kind == "le":
            sign, scales = 1.0, [1.0]
        elif c.kind == "psd":
            sign = -1.0
            scales = [1.0 if i == j else SQRT2 for j in range(c.size) for i in range(j + 1)]
        else:
            sign, scales = -1.0, [1.0] * len(c.exprs)
        start = r
        for e, s in zip(c.exprs, scales):
            for i, coef in e.terms.items():
                rows.append(r)
                cols.append(i)
                vals.append(sign * s * coef)
            b.append(-sign * s * e.const)
            r += 1
        slices[c.name] = (c, start, r, scales)
        if c.kind == "eq":
            n_eq += 1
        elif c.kind == "le":
            n_le += 1
        elif c.kind == "soc":
            cones.append(clarabel.SecondOrderConeT(len(c.exprs)))
        elif c.kind == "exp":
            cones.append(clarabel.ExponentialConeT())
        else:
            cones.append(clarabel.PSDTriangleConeT(c.size))
    head = []
    if n_eq:
        head.append(clarabel.ZeroConeT(n_eq))
    if n_le:
        head.append(clarabel.NonnegativeConeT(n_le))
    A = sparse.csc_matrix((vals, (rows, cols)), shape=(r, prog.num_vars))
    return A, np.array(b, dtype=float), head + cones, slices


def _solve_clarabel(prog: ConicProgram, tol: float, max_iter: int = 500, verbose: bool = False) -> SolveResult:
    import clarabel

    n = prog.num_vars
    A, b, cones, slices = _assemble(prog)
    q = np.zeros(n)
    for i, c in prog.objective.terms.items():
        q[i] = -c
    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.max_iter = max_iter
    settings.max_threads = 1
    P = sparse.csc_matrix((n, n))
    sol = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()
    raw = str(sol.status).split(".")[-1]
    status = _CLARABEL_STATUS.get(raw, "numerical-failure")
    x = np.array(sol.x, dtype=float)
    resid = prog.max_violation(x) if len(x) == n and np.all(np.isfinite(x)) else float("inf")
    if raw == "AlmostSolved" and resid <= max(tol * 100, 1e-6):
        status = "optimal"
    if status != "optimal":
        return SolveResult(status, None, {}, float("nan"), resid, sol.iterations, sol.solve_time, raw)
    z = np.array(sol.z, dtype=float)
    duals = {}
    for name, (c, lo, hi, scales) in slices.items():
        d = z[lo:hi] / np.asarray(scales)
        if c.kind == "eq":
            d = -d
        elif c.kind == "psd":
            d = np.array(_unpack_triangle(list(d), c.size))
        duals[name] = d
    return SolveResult(status, x, duals, prog.objective.value(x), resid, sol.iterations, sol.solve_time, raw)


def _solve_cvxpy(prog: ConicProgram, tol: float, solver: str, **kwargs) -> SolveResult:
    """Generic adapter: route the program through cvxpy to any installed conic solver."""
    import cvxpy as cp

    n = prog.num_vars
    x = cp.Variable(n)

    def expr(e: Affine):
        if not e.terms:
            return cp.Constant(e.const)
        idx = np.array(sorted(e.terms))
        return np.array([e.terms[i] for i in idx]) @ x[idx] + e.const

    cons = []
    for c in prog.constraints:
        es = [expr(e) for e in c.exprs]
        if c.kind == "le":
            cons.append(es[0] <= 0)
        elif c.kind == "eq":
            cons.append(es[0] == 0)
        elif c.kind == "soc":
            cons.append(cp.SOC(es[0], cp.hstack(es[1:])))
        elif c.kind == "exp":
            cons.append(cp.constraints.ExpCone(*es))
        else:
            m = _unpack_triangle(es, c.size)
            cons.append(cp.bmat(m) >> 0)
    problem = cp.Problem(cp.Maximize(expr(prog.objective)), cons)
    opts = {"CLARABEL": {"tol_gap_abs": tol, "tol_gap_rel": tol, "tol_feas": tol},
            "SCS": {"eps": tol}}.get(solver, {})
    opts.update(kwargs)
    try:
        problem.solve(solver=solver, **opts)
    except cp.error.SolverError as exc:
        return SolveResult("numerical-failure", None, detail=str(exc))
    status = {
        cp.OPTIMAL: "optimal",
        cp.OPTIMAL_INACCURATE: "optimal",
        cp.INFEASIBLE: "infeasible",
        cp.UNBOUNDED: "unbounded",
    }.get(problem.status, "numerical-failure")
    if status != "optimal":
        return SolveResult(status, None, detail=problem.status)
    xv = np.array(x.value, dtype=float)
    duals = {}
    for c, con in zip(prog.constraints, cons):
        dv = con.dual_value
        if c.kind in ("le", "eq"):
            duals[c.name] = np.atleast_1d(np.asarray(dv, dtype=float))
        elif c.kind == "psd":
            duals[c.name] = np.asarray(dv, dtype=float)
        else:
            duals[c.name] = np.concatenate([np.atleast_1d(np.asarray(d, dtype=float)).ravel() for d in (dv if isinstance(dv, list) else [dv])])
    return SolveResult(status, xv, duals, prog.objective.value(xv), prog.max_violation(xv), 0, 0.0, problem.status)


# -- concave log terms --------------------------------------------------------

def _log2p(s):
    return np.log2(1.0 + np.asarray(s, dtype=float))


def _chord_gap(a: float, b: float) -> float:
    """Largest gap between log2(1+s) and its chord on [a, b]."""
    fa, fb = _log2p(a), _log2p(b)
    slope = (fb - fa) / (b - a)
    xs = 1.0 / (slope * LN2) - 1.0
    xs = min(max(xs, a), b)
    return float(_log2p(xs) - (fa + slope * (xs - a)))


def pwl_breakpoints(s_max: float, gap: float = 1e-4) -> np.ndarray:
    """Breakpoints on [0, s_max] whose chords stay within ``gap`` bits of log2(1+s)."""
    if s_max <= 0:
        return np.array([0.0, 1.0])
    pts = [0.0]
    while pts[-1] < s_max:
        a = pts[-1]
        lo, hi = a, s_max
        if _chord_gap(a, hi) <= gap:
            pts.append(hi)
            break
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if _chord_gap(a, mid) <= gap:
                lo = mid
            else:
                hi = mid
        pts.append(lo if lo > a else hi)
    return np.array(pts)


def pwl_envelope(s, breakpoints) -> np.ndarray:
    """Piecewise-linear interpolant of log2(1+s) (a lower envelope on the breakpoint range)."""
    bp = np.asarray(breakpoints, dtype=float)
    return np.interp(s, bp, _log2p(bp))


def log_term(prog: ConicProgram, power, gain: float, noise: float, *, method: str = "exp",
             s_max: float | None = None, gap: float = 1e-4, sense: str = "hypograph", name: str | None = None) -> Affine:
    """Hypograph variable t <= log2(1 + power * gain / noise).

    ``method="exp"`` uses the exponential cone and is exact.  ``"pwl"``
    uses chords of the concave function between breakpoints on
    [0, s_max] (SNR units); the chords never exceed the true function there
    and are within ``gap`` bits of it.  The SNR is then capped at s_max.
    Only the concave (hypograph) orientation is convex; other uses raise.
    """
    if sense != "hypograph":
        raise ValueError("log2(1+s) is concave: only hypograph (t <= log) use is convex")
    name = name or f"log{len(prog.constraints)}"
    t = prog.variable(name)
    snr = Affine.of(power) * (gain / noise)
    if method == "exp":
        k = gain / noise
        if k > 1.0:
            # 2^t <= 1 + k p  <=>  exp(ln2 t - ln k) <= 1/k + p, with O(1) coefficients
            prog.add_exp(LN2 * t - np.log(k), 1.0, Affine.of(power) + 1.0 / k, name=name)
        else:
            prog.add_exp(LN2 * t, 1.0, 1.0 + snr, name=name)
        return t
    if method != "pwl":
        raise ValueError(f"unknown log encoding {method!r}")
    if s_max is None:
        raise ValueError("piecewise encoding needs s_max")
    bp = pwl_breakpoints(s_max, gap)
    fv = _log2p(bp)
    for k in range(len(bp) - 1):
        slope = (fv[k + 1] - fv[k]) / (bp[k + 1] - bp[k])
        prog.add_le(t, fv[k] + slope * (snr - bp[k]), name=f"{name}.pwl{k}")
    prog.add_le(snr, s_max, name=f"{name}.cap")
    return t
