"""Affine inequality rows over the decision variables [u; delta].

Every constraint the controllers emit is one of these rows.  Safety rows
(time-varying barrier conditions and joint limits) are hard; the stabilization
row is the only relaxable one, referencing the slack variable delta in its
last coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import PlanarArm

LE = "<="
GE = ">="


@dataclass(frozen=True)
class ClassK:
    """Linear class-K function mu(s) = slope * s with slope > 0."""

    slope: float = 1.0

    def __post_init__(self):
        if self.slope <= 0:
            raise ValueError("class-K slope must be positive")

    def __call__(self, s: float) -> float:
        return self.slope * s


@dataclass(frozen=True)
class ConstraintRow:
    """One affine inequality coeffs . [u; delta] (sense) bound."""

    coeffs: np.ndarray
    bound: float
    sense: str
    kind: str  # clf | cbf | joint_limit | hyperplane
    relaxable: bool = False

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        if self.sense not in (LE, GE):
            raise ValueError(f"sense must be '{LE}' or '{GE}'")
        if self.relaxable and self.kind != "clf":
            raise ValueError("only clf rows may be relaxable")
        if not self.relaxable and self.coeffs[-1] != 0.0:
            raise ValueError(f"{self.kind} rows must not reference the slack variable")

    def evaluate(self, z: np.ndarray) -> float:
        """Signed slack: nonnegative iff the row is satisfied at z."""
        lhs = float(self.coeffs @ z)
        return self.bound - lhs if self.sense == LE else lhs - self.bound


def _stack_slack(grad_q: np.ndarray, slack_coeff: float) -> np.ndarray:
    grad_q = np.asarray(grad_q, dtype=float)
    return np.concatenate([grad_q, [slack_coeff]])


def tvclf_row(V: float, grad_q, dV_dt: float, gamma: ClassK = ClassK()) -> ConstraintRow:
    """Relaxable stabilization row: grad_q . u - delta <= -gamma(V) - dV_dt.

    The dV_dt term lets the condition track a moving target; it vanishes for
    static goals.
    """
    if V < 0:
        raise ValueError("stabilization function value must be nonnegative")
    return ConstraintRow(coeffs=_stack_slack(grad_q, -1.0),
                         bound=-gamma(V) - dV_dt, sense=LE, kind="clf", relaxable=True)


def tvcbf_row(h: float, grad_q, dh_dt: float, alpha: ClassK = ClassK()) -> ConstraintRow:
    """Hard safety row: grad_q . u >= -alpha(h) - dh_dt.

    Callers pass h already margined (distance minus the safety margin).  The
    dh_dt term carries the obstacle's motion; with a zero gradient the row is
    vacuous unless dh_dt is negative enough to make it infeasible, which the
    solver reports.
    """
    return ConstraintRow(coeffs=_stack_slack(grad_q, 0.0),
                         bound=-alpha(h) - dh_dt, sense=GE, kind="cbf")


def joint_limit_rows(q, arm: PlanarArm, alpha_min: ClassK = ClassK(),
                     alpha_max: ClassK = ClassK()) -> list[ConstraintRow]:
    """Barrier rows keeping each joint inside [q_min, q_max]."""
    q = np.asarray(q, dtype=float)
    n = arm.n_links
    rows = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        rows.append(ConstraintRow(coeffs=_stack_slack(e, 0.0),
                                  bound=-alpha_min(q[i] - arm.q_min[i]),
                                  sense=GE, kind="joint_limit"))
        rows.append(ConstraintRow(coeffs=_stack_slack(-e, 0.0),
                                  bound=-alpha_max(arm.q_max[i] - q[i]),
                                  sense=GE, kind="joint_limit"))
    return rows


BASELINE_VARIANTS = ("sdf_cbf", "sdf_sh", "cdf_sh")


def baseline_rows(variant: str, h: float, grad_q, alpha: ClassK = ClassK()) -> ConstraintRow:
    """Time-invariant comparison constraints.

    sdf_cbf keeps the barrier form but drops the obstacle-velocity term;
    the separating-hyperplane forms additionally normalize the gradient to a
    unit hyperplane normal, scaling the bound by the same factor.
    """
    if variant not in BASELINE_VARIANTS:
        raise ValueError(f"variant must be one of {BASELINE_VARIANTS}")
    grad_q = np.asarray(grad_q, dtype=float)
    if variant == "sdf_cbf":
        return tvcbf_row(h, grad_q, 0.0, alpha)
    norm = float(np.linalg.norm(grad_q))
    if norm < 1e-12:
        return tvcbf_row(h, grad_q, 0.0, alpha)
    row = ConstraintRow(coeffs=_stack_slack(grad_q / norm, 0.0),
                        bound=-alpha(h) / norm, sense=GE, kind="hyperplane")
    return row
