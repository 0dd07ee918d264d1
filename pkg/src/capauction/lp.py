"""Small linear-program facade (maximisation form) over scipy's HiGHS backend."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

FEAS_TOL = 1e-8
OBJ_TOL = 1e-6

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}
# Tried in order when HiGHS reports numerical trouble instead of a verdict.
_ATTEMPTS = (("highs", _HIGHS_OPTIONS), ("highs-ds", {}), ("highs-ipm", {}))


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class LpError(RuntimeError):
    """The backend failed numerically or returned a point violating the constraints."""


@dataclass(frozen=True)
class LinearProgram:
    """maximize ``objective @ x`` s.t. bounds, ``eq_matrix @ x == eq_rhs``, ``ub_matrix @ x <= ub_rhs``.

    ``upper`` may contain ``inf``.
    """

    objective: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    ub_matrix: np.ndarray | None = None
    ub_rhs: np.ndarray | None = None
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        n = len(self.objective)
        if len(self.lower) != n or len(self.upper) != n:
            raise ValueError("bound vectors do not match objective length")
        if np.any(np.asarray(self.lower) > np.asarray(self.upper)):
            raise ValueError("lower bound exceeds upper bound")
        for mat, rhs in ((self.eq_matrix, self.eq_rhs), (self.ub_matrix, self.ub_rhs)):
            if mat is None:
                continue
            if mat.shape[1] != n or mat.shape[0] != len(rhs):
                raise ValueError("constraint dimensions are inconsistent")

    @property
    def n(self) -> int:
        return len(self.objective)


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    values: np.ndarray
    objective_value: float

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def _snap(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    r = np.round(x)
    x = np.where(np.abs(x - r) <= 1e-7, r, x)
    return np.clip(x, lower, upper)


def violation(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest constraint violation of ``x`` (0 when feasible)."""
    worst = max(0.0, float(np.max(lp.lower - x, initial=0.0)), float(np.max(x - lp.upper, initial=0.0)))
    if lp.eq_matrix is not None and len(lp.eq_rhs):
        worst = max(worst, float(np.max(np.abs(lp.eq_matrix @ x - lp.eq_rhs))))
    if lp.ub_matrix is not None and len(lp.ub_rhs):
        worst = max(worst, float(np.max(lp.ub_matrix @ x - lp.ub_rhs, initial=0.0)))
    return worst


def solve(lp: LinearProgram) -> LpSolution:
    if lp.n == 0:
        return LpSolution(LpStatus.OPTIMAL, np.zeros(0), 0.0)
    kwargs = {}
    if lp.eq_matrix is not None and len(lp.eq_rhs):
        kwargs["A_eq"], kwargs["b_eq"] = lp.eq_matrix, lp.eq_rhs
    if lp.ub_matrix is not None and len(lp.ub_rhs):
        kwargs["A_ub"], kwargs["b_ub"] = lp.ub_matrix, lp.ub_rhs
    upper = [None if np.isinf(u) else float(u) for u in lp.upper]
    for method, options in _ATTEMPTS:
        res = linprog(-np.asarray(lp.objective, dtype=float), bounds=list(zip(lp.lower, upper)),
                      method=method, options=options, **kwargs)
        if res.status != 4:  # 4: numerical difficulties
            break
    if res.status == 2:
        return LpSolution(LpStatus.INFEASIBLE, np.full(lp.n, np.nan), float("nan"))
    if res.status == 3:
        return LpSolution(LpStatus.UNBOUNDED, np.full(lp.n, np.nan), float("inf"))
    if res.status != 0:
        raise LpError(f"LP backend failed: {res.message}")
    x = np.asarray(res.x, dtype=float)
    snapped = _snap(x, lp.lower, lp.upper)
    if violation(lp, snapped) <= FEAS_TOL:
        x = snapped
    elif violation(lp, x) > FEAS_TOL * max(1.0, float(np.max(np.abs(x), initial=0.0))):
        raise LpError(f"LP solution violates constraints by {violation(lp, x):.3g}")
    return LpSolution(LpStatus.OPTIMAL, x, float(lp.objective @ x))


def to_lp_text(lp: LinearProgram) -> str:
    """Dump in CPLEX LP text format for cross-checking with external solvers."""
    names = lp.names or tuple(f"x{i}" for i in range(lp.n))

    def expr(coefs):
        terms = [f"{'-' if c < 0 else '+'} {abs(c):.12g} {names[i]}" for i, c in enumerate(coefs) if c != 0]
        if not terms:
            return "0 " + names[0] if names else "0"
        text = " ".join(terms)
        return text[2:] if text.startswith("+ ") else text

    lines = ["Maximize", f" obj: {expr(lp.objective)}", "Subject To"]
    if lp.eq_matrix is not None:
        for i, (row, rhs) in enumerate(zip(lp.eq_matrix, lp.eq_rhs)):
            lines.append(f" eq{i}: {expr(row)} = {rhs:.12g}")
    if lp.ub_matrix is not None:
        for i, (row, rhs) in enumerate(zip(lp.ub_matrix, lp.ub_rhs)):
            lines.append(f" ub{i}: {expr(row)} <= {rhs:.12g}")
    lines.append("Bounds")
    for name, lo, hi in zip(names, lp.lower, lp.upper):
        hi_text = "+inf" if np.isinf(hi) else f"{hi:.12g}"
        lines.append(f" {lo:.12g} <= {name} <= {hi_text}")
    lines.append("End")
    return "\n".join(lines) + "\n"
