"""Dense strictly convex QP solver for the per-step control problems.

Solves  min 1/2 z' diag(H) z + c' z  subject to general affine inequality
rows and box bounds, via a dual active-set method: start at the unconstrained
minimum, repeatedly add the most violated constraint (ties broken by lowest
index), taking partial steps and dropping constraints whose multipliers would
turn negative.  Problems here are tiny (a handful of variables and rows), so
every linear system is solved densely from scratch.

An exhaustive active-set enumeration is provided as an independent oracle for
testing and self-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .constraints import ConstraintRow, GE, LE

FEAS_TOL = 1e-8
PIVOT_TOL = 1e-10
DEDUP_DECIMALS = 12

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"


@dataclass
class QpProblem:
    """Strictly convex QP over z = [u; delta].

    The objective is 1/2 z' diag(hessian_diag) z + linear' z; for the control
    problems hessian_diag holds the joint effort weights and twice the slack
    penalty.  `linear` defaults to zero (pure effort minimization).
    """

    dim: int
    hessian_diag: np.ndarray
    rows: list[ConstraintRow] = field(default_factory=list)
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    linear: np.ndarray | None = None

    def __post_init__(self):
        self.hessian_diag = np.asarray(self.hessian_diag, dtype=float)
        if self.hessian_diag.shape != (self.dim,):
            raise ValueError("hessian_diag must have length dim")
        if not np.all(self.hessian_diag > 0):
            raise ValueError("hessian_diag must be strictly positive")
        self.lower = (np.full(self.dim, -np.inf) if self.lower is None
                      else np.asarray(self.lower, dtype=float))
        self.upper = (np.full(self.dim, np.inf) if self.upper is None
                      else np.asarray(self.upper, dtype=float))
        if self.lower.shape != (self.dim,) or self.upper.shape != (self.dim,):
            raise ValueError("bounds must have length dim")
        if not np.all(self.lower <= self.upper):
            raise ValueError("lower bounds must not exceed upper bounds")
        self.linear = (np.zeros(self.dim) if self.linear is None
                       else np.asarray(self.linear, dtype=float))
        for row in self.rows:
            if row.coeffs.shape != (self.dim,):
                raise ValueError("constraint row dimension mismatch")

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ (self.hessian_diag * z) + self.linear @ z)


@dataclass
class QpSolution:
    """Solver output.

    active_set holds canonical constraint indices: rows keep their position in
    problem.rows; the lower/upper bound of variable i map to
    n_rows + 2*i and n_rows + 2*i + 1.  multipliers align with active_set.
    """

    z: np.ndarray
    status: str
    active_set: tuple[int, ...] = ()
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kkt_residual: float = np.inf
    iterations: int = 0


def bound_index(problem: QpProblem, var: int, which: str) -> int:
    """Canonical active-set index of a box bound ('lower' or 'upper')."""
    base = len(problem.rows) + 2 * var
    return base if which == "lower" else base + 1


def _canonical_constraints(problem: QpProblem):
    """All constraints as normals/offsets with a_i . z >= b_i.

    Returns (normals, offsets, indices, status): duplicate rows are merged by
    hashing coefficients at 1e-12, vacuous zero rows dropped, and a zero row
    with a positive offset makes the whole problem infeasible.
    """
    normals, offsets, indices = [], [], []
    seen: dict[tuple, int] = {}
    for i, row in enumerate(problem.rows):
        a = row.coeffs if row.sense == GE else -row.coeffs
        b = row.bound if row.sense == GE else -row.bound
        if np.max(np.abs(a)) < 1e-13:
            if b > FEAS_TOL:
                return None, None, None, INFEASIBLE
            continue  # vacuous
        key = tuple(np.round(np.concatenate([a, [b]]), DEDUP_DECIMALS))
        if key in seen:
            continue
        seen[key] = i
        normals.append(a)
        offsets.append(b)
        indices.append(i)
    n_rows = len(problem.rows)
    for i in range(problem.dim):
        e = np.zeros(problem.dim)
        e[i] = 1.0
        if np.isfinite(problem.lower[i]):
            normals.append(e.copy())
            offsets.append(problem.lower[i])
            indices.append(n_rows + 2 * i)
        if np.isfinite(problem.upper[i]):
            normals.append(-e)
            offsets.append(-problem.upper[i])
            indices.append(n_rows + 2 * i + 1)
    if normals:
        return np.array(normals), np.array(offsets), indices, None
    return np.zeros((0, problem.dim)), np.zeros(0), indices, None


def _kkt_residuals(problem, z, normals, offsets, active, lam):
    slacks = normals @ z - offsets if len(offsets) else np.zeros(0)
    primal = max(0.0, float(-np.min(slacks))) if len(slacks) else 0.0
    dual = max(0.0, float(-np.min(lam))) if len(lam) else 0.0
    grad = problem.hessian_diag * z + problem.linear
    if len(active):
        grad = grad - normals[active].T @ lam
        comp = float(np.max(np.abs(lam * slacks[active])))
    else:
        comp = 0.0
    stationarity = float(np.max(np.abs(grad)))
    return primal, dual, stationarity, comp


def _try_warm_start(problem, normals, offsets, indices, warm_active):
    """Accept a previous active set if its equality solution passes KKT."""
    pos = {idx: k for k, idx in enumerate(indices)}
    active = sorted({pos[i] for i in warm_active if i in pos})
    if len(active) > problem.dim:
        return None
    k = len(active)
    na = normals[active]
    kkt = np.zeros((problem.dim + k, problem.dim + k))
    kkt[: problem.dim, : problem.dim] = np.diag(problem.hessian_diag)
    kkt[: problem.dim, problem.dim:] = -na.T
    kkt[problem.dim:, : problem.dim] = na
    rhs = np.concatenate([-problem.linear, offsets[active]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return None
    z, lam = sol[: problem.dim], sol[problem.dim:]
    slacks = normals @ z - offsets if len(offsets) else np.zeros(0)
    if (len(slacks) == 0 or np.min(slacks) >= -FEAS_TOL) and (k == 0 or np.min(lam) >= -FEAS_TOL):
        return z, active, np.maximum(lam, 0.0)
    return None


def solve(problem: QpProblem, warm_active: tuple[int, ...] | None = None) -> QpSolution:
    """Solve the QP; returns status 'infeasible' instead of raising.

    warm_active seeds the solver with a previous step's active set; the result
    never depends on it (a failed warm start falls back to the cold path).
    """
    normals, offsets, indices, status = _canonical_constraints(problem)
    if status == INFEASIBLE:
        return QpSolution(z=np.zeros(problem.dim), status=INFEASIBLE)
    hinv = 1.0 / problem.hessian_diag

    if warm_active:
        warm = _try_warm_start(problem, normals, offsets, indices, warm_active)
        if warm is not None:
            z, active, lam = warm
            res = max(_kkt_residuals(problem, z, normals, offsets, active, lam))
            return QpSolution(z=z, status=OPTIMAL,
                              active_set=tuple(indices[k] for k in active),
                              multipliers=lam, kkt_residual=res)

    z = -problem.linear * hinv
    active: list[int] = []
    lam = np.zeros(0)
    m = normals.shape[0]
    max_iter = 50 * (m + 1) + 100
    iterations = 0

    while iterations < max_iter:
        iterations += 1
        slacks = normals @ z - offsets if m else np.zeros(0)
        if len(slacks):
            masked = slacks.copy()
            masked[active] = np.inf
            p = int(np.argmin(masked))
            worst = masked[p]
        else:
            worst = np.inf
            p = -1
        if worst >= -FEAS_TOL:
            res = max(_kkt_residuals(problem, z, normals, offsets, active, lam))
            return QpSolution(z=z, status=OPTIMAL,
                              active_set=tuple(indices[k] for k in active),
                              multipliers=lam, kkt_residual=res,
                              iterations=iterations)
        n_p = normals[p]
        lam_p = 0.0
        while True:
            iterations += 1
            if iterations > max_iter:
                break
            if active:
                na = normals[active]
                hn = hinv * n_p
                mat = na @ (hinv[None, :] * na).T
                try:
                    r = np.linalg.solve(mat, na @ hn)
                except np.linalg.LinAlgError:
                    r = np.linalg.lstsq(mat, na @ hn, rcond=None)[0]
                dz = hinv * (n_p - na.T @ r)
            else:
                r = np.zeros(0)
                dz = hinv * n_p
            c_dz = float(n_p @ dz)
            s_p = float(n_p @ z - offsets[p])

            t_dual, j_block = np.inf, -1
            for k_idx in range(len(active)):
                if r[k_idx] > PIVOT_TOL:
                    t = lam[k_idx] / r[k_idx]
                    if t < t_dual - 1e-14:
                        t_dual, j_block = t, k_idx
            t_primal = -s_p / c_dz if c_dz > PIVOT_TOL else np.inf
            t = min(t_dual, t_primal)
            if not np.isfinite(t):
                return QpSolution(z=np.zeros(problem.dim), status=INFEASIBLE,
                                  iterations=iterations)
            if c_dz > PIVOT_TOL:
                z = z + t * dz
            if len(lam):
                lam = lam - t * r
            lam_p += t
            if t_primal <= t_dual:
                active.append(p)
                lam = np.concatenate([lam, [lam_p]])
                break
            del active[j_block]
            lam = np.delete(lam, j_block)

    raise RuntimeError("active-set solver failed to converge")


def verify_kkt(problem: QpProblem, solution: QpSolution) -> dict[str, float]:
    """Residual report for an optimal solution.

    Returns primal feasibility violation, dual feasibility violation,
    stationarity norm, complementary slackness, and their maximum.
    """
    if solution.status != OPTIMAL:
        raise ValueError("verify_kkt expects an optimal solution")
    normals, offsets, indices, _ = _canonical_constraints(problem)
    pos = {idx: k for k, idx in enumerate(indices)}
    active = [pos[i] for i in solution.active_set]
    primal, dual, stationarity, comp = _kkt_residuals(
        problem, solution.z, normals, offsets, active, solution.multipliers)
    return {
        "primal": primal,
        "dual": dual,
        "stationarity": stationarity,
        "complementarity": comp,
        "max": max(primal, dual, stationarity, comp),
    }


def solve_by_enumeration(problem: QpProblem, max_candidates: int = 2_000_000) -> QpSolution:
    """Independent oracle: try every active subset, keep the best feasible point.

    For each subset of constraints (up to dim of them), solve the equality
    KKT system; the optimum of the inequality problem is the feasible
    candidate with the smallest objective.  Exponential in the constraint
    count; intended for testing and self-checks only.
    """
    normals, offsets, indices, status = _canonical_constraints(problem)
    if status == INFEASIBLE:
        return QpSolution(z=np.zeros(problem.dim), status=INFEASIBLE)
    m = normals.shape[0]
    total = sum(math.comb(m, k) for k in range(problem.dim + 1))
    if total > max_candidates:
        raise ValueError(f"enumeration would visit {total} subsets")
    hess = np.diag(problem.hessian_diag)
    best, best_obj, best_subset, best_mult = None, np.inf, (), np.zeros(0)
    for k in range(0, min(problem.dim, m) + 1):
        for subset in combinations(range(m), k):
            na = normals[list(subset)]
            kkt = np.zeros((problem.dim + k, problem.dim + k))
            kkt[: problem.dim, : problem.dim] = hess
            kkt[: problem.dim, problem.dim:] = -na.T
            kkt[problem.dim:, : problem.dim] = na
            rhs = np.concatenate([-problem.linear, offsets[list(subset)]])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(sol)) or np.max(np.abs(kkt @ sol - rhs)) > 1e-7:
                continue
            z = sol[: problem.dim]
            if m and np.min(normals @ z - offsets) < -1e-9:
                continue
            obj = problem.objective(z)
            if obj < best_obj - 1e-12:
                best, best_obj = z, obj
                best_subset = tuple(indices[i] for i in subset)
                best_mult = sol[problem.dim:]
    if best is None:
        return QpSolution(z=np.zeros(problem.dim), status=INFEASIBLE)
    return QpSolution(z=best, status=OPTIMAL, active_set=best_subset,
                      multipliers=best_mult, kkt_residual=np.nan)


def dump_problem(problem: QpProblem) -> str:
    """Text matrix dump for offline cross-checking: one row per line."""
    lines = [
        f"# dim {problem.dim}",
        "# hessian_diag " + " ".join(f"{v:.17g}" for v in problem.hessian_diag),
        "# linear " + " ".join(f"{v:.17g}" for v in problem.linear),
        "# lower " + " ".join(f"{v:.17g}" for v in problem.lower),
        "# upper " + " ".join(f"{v:.17g}" for v in problem.upper),
    ]
    for row in problem.rows:
        coeffs = " ".join(f"{v:.17g}" for v in row.coeffs)
        lines.append(f"{coeffs} {row.sense} {row.bound:.17g}")
    return "\n".join(lines) + "\n"
