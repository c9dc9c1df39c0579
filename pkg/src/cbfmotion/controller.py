"""Per-step QP assembly for the safety-critical controller variants.

Each variant builds one hard safety row per obstacle (time-varying or not,
on the signed or configuration distance field), joint-limit rows, and box
bounds on the commanded joint velocities.  Goal attraction comes either from
a relaxable whole-body stabilization row on the configuration distance to a
moving task-space target, or from a saturated proportional command toward a
joint goal that the QP filters for safety.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .constraints import ClassK, ConstraintRow, baseline_rows, joint_limit_rows, tvcbf_row, tvclf_row
from .distance_fields import DistanceQuery, UnreachablePointError, cdf_eval, sdf_eval
from .kinematics import PlanarArm
from .qp_solver import INFEASIBLE, OPTIMAL, QpProblem, solve

VARIANT_TAGS = (
    "cdf_tvcbf_tvclf",
    "cdf_tvcbf",
    "sdf_tvcbf",
    "sdf_cbf_baseline",
    "sdf_sh_baseline",
    "cdf_sh_baseline",
)

#: Variants benchmarked against each other (goal attraction toward a joint state).
BENCHMARK_TAGS = VARIANT_TAGS[1:]

DISPLAY_NAMES = {
    "cdf_tvcbf_tvclf": "CDF-TVCBF-TVCLF-QP",
    "cdf_tvcbf": "CDF-TVCBF-QP",
    "sdf_tvcbf": "SDF-TVCBF-QP",
    "sdf_cbf_baseline": "SDF-CBF-QP",
    "sdf_sh_baseline": "SDF-SH-QP",
    "cdf_sh_baseline": "CDF-SH-QP",
}

JOINT_GOAL = "joint_goal"
CDF_TARGET = "cdf_target"


@dataclass(frozen=True)
class Obstacle:
    center: np.ndarray
    radius: float
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if self.radius <= 0:
            raise ValueError("obstacle radius must be positive")


@dataclass(frozen=True)
class JointGoal:
    """Static goal configuration in joint space."""

    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))


@dataclass(frozen=True)
class TaskTarget:
    """Moving task-space point to be reached with any part of the arm."""

    point: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))


Target = Union[JointGoal, TaskTarget]


@dataclass(frozen=True)
class EnvironmentState:
    """Obstacles and the reaching target at one instant."""

    obstacles: tuple[Obstacle, ...]
    target: Target

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    def advance(self, dt: float) -> "EnvironmentState":
        """Environment one step later; everything moves at constant velocity."""
        moved = tuple(replace(ob, center=ob.center + dt * ob.velocity)
                      for ob in self.obstacles)
        target = self.target
        if isinstance(target, TaskTarget):
            target = replace(target, point=target.point + dt * target.velocity)
        return EnvironmentState(obstacles=moved, target=target)


@dataclass(frozen=True)
class ControllerVariant:
    """Controller configuration: constraint family, weights, slopes, margins.

    eps_cbf margins every safety constraint (h = d - eps_cbf); eps_clf is the
    reaching tolerance.  nominal_gain is the proportional gain of the
    goal-directed command used when no stabilization row is present.
    """

    tag: str
    clf_mode: str
    r_diag: float | np.ndarray = 1.0
    p: float = 10.0
    gamma: float = 1.0
    alpha: float = 1.0
    alpha_min: float = 1.0
    alpha_max: float = 1.0
    eps_cbf: float = 0.05
    eps_clf: float = 0.02
    nominal_gain: float = 10.0
    cdf_resolution: float = 0.005
    inflate_cdf_obstacles: bool = True

    def __post_init__(self):
        if self.tag not in VARIANT_TAGS:
            raise ValueError(f"unknown variant {self.tag!r}; valid: {', '.join(VARIANT_TAGS)}")
        if self.clf_mode not in (JOINT_GOAL, CDF_TARGET):
            raise ValueError(f"clf_mode must be '{JOINT_GOAL}' or '{CDF_TARGET}'")
        if self.eps_cbf < 0 or self.eps_clf < 0:
            raise ValueError("margins must be nonnegative")

    @classmethod
    def from_tag(cls, tag: str, **overrides) -> "ControllerVariant":
        mode = CDF_TARGET if tag == "cdf_tvcbf_tvclf" else JOINT_GOAL
        return cls(tag=tag, clf_mode=overrides.pop("clf_mode", mode), **overrides)

    @property
    def uses_cdf(self) -> bool:
        return self.tag in ("cdf_tvcbf_tvclf", "cdf_tvcbf", "cdf_sh_baseline")

    @property
    def time_varying(self) -> bool:
        return self.tag in ("cdf_tvcbf_tvclf", "cdf_tvcbf", "sdf_tvcbf")

    @property
    def baseline_kind(self) -> Optional[str]:
        return {"sdf_cbf_baseline": "sdf_cbf",
                "sdf_sh_baseline": "sdf_sh",
                "cdf_sh_baseline": "cdf_sh"}.get(self.tag)


@dataclass
class StepDiagnostics:
    """Everything the simulator logs about one control step."""

    V: float
    delta: float
    h: np.ndarray            # margined safety values, one per obstacle
    field_d: np.ndarray      # unmargined distance-field values per obstacle
    status: str
    active_set: tuple[int, ...]
    clf_dropped: bool = False
    infeasible: bool = False
    target_distance: float = np.nan


def _obstacle_query(arm: PlanarArm, q, ob: Obstacle, variant: ControllerVariant) -> DistanceQuery:
    if variant.uses_cdf:
        radius = ob.radius if variant.inflate_cdf_obstacles else 0.0
        return cdf_eval(arm, q, ob.center, resolution=variant.cdf_resolution,
                        contact_radius=radius)
    return sdf_eval(arm, q, ob.center, ob.radius)


def control_step(arm: PlanarArm, q, env: EnvironmentState, variant: ControllerVariant,
                 warm_active: tuple[int, ...] | None = None):
    """Assemble and solve the per-step QP; returns (u, StepDiagnostics).

    An infeasible QP commands zero velocity and raises the infeasible flag:
    safety rows are never relaxed.  An unreachable whole-body target drops the
    stabilization row for the step.
    """
    q = np.asarray(q, dtype=float)
    n = arm.n_links
    rows: list[ConstraintRow] = []
    alpha = ClassK(variant.alpha)
    gamma = ClassK(variant.gamma)

    # Goal attraction.
    u_nominal = None
    clf_dropped = False
    target_distance = np.nan
    if variant.clf_mode == CDF_TARGET:
        if not isinstance(env.target, TaskTarget):
            raise ValueError("cdf_target mode requires a TaskTarget")
        V = 0.0
        try:
            query = cdf_eval(arm, q, env.target.point, resolution=variant.cdf_resolution)
            target_distance = query.d
            V = max(query.d - variant.eps_clf, 0.0)
            if V > 0.0 and not query.degenerate:
                dV_dt = float(query.grad_p @ env.target.velocity)
                rows.append(tvclf_row(V, query.grad_q, dV_dt, gamma))
            else:
                clf_dropped = True
        except UnreachablePointError:
            clf_dropped = True
    else:
        if not isinstance(env.target, JointGoal):
            raise ValueError("joint_goal mode requires a JointGoal")
        err = q - env.target.q
        V = float(0.5 * err @ err)
        u_nominal = np.clip(-variant.nominal_gain * err, arm.u_min, arm.u_max)

    # Safety rows, one per obstacle.  A configuration-distance row only exists
    # while the obstacle is inside the task space; beyond reach it cannot be
    # touched and carries no constraint.
    h_vals = np.zeros(len(env.obstacles))
    field_d = np.zeros(len(env.obstacles))
    for i, ob in enumerate(env.obstacles):
        try:
            query = _obstacle_query(arm, q, ob, variant)
        except UnreachablePointError:
            h_vals[i] = np.inf
            field_d[i] = np.inf
            continue
        field_d[i] = query.d
        h = query.d - variant.eps_cbf
        h_vals[i] = h
        if variant.baseline_kind is not None:
            rows.append(baseline_rows(variant.baseline_kind, h, query.grad_q, alpha))
        else:
            dh_dt = float(query.grad_p @ ob.velocity)
            rows.append(tvcbf_row(h, query.grad_q, dh_dt, alpha))

    rows.extend(joint_limit_rows(q, arm, ClassK(variant.alpha_min), ClassK(variant.alpha_max)))

    r_diag = np.broadcast_to(np.asarray(variant.r_diag, dtype=float), (n,))
    hessian = np.concatenate([r_diag, [2.0 * variant.p]])
    linear = None
    if u_nominal is not None:
        linear = np.concatenate([-r_diag * u_nominal, [0.0]])
    lower = np.concatenate([arm.u_min, [0.0]])
    upper = np.concatenate([arm.u_max, [np.inf]])
    problem = QpProblem(dim=n + 1, hessian_diag=hessian, rows=rows,
                        lower=lower, upper=upper, linear=linear)
    sol = solve(problem, warm_active=warm_active)

    if sol.status != OPTIMAL:
        u = np.zeros(n)
        diag = StepDiagnostics(V=V, delta=0.0, h=h_vals, field_d=field_d,
                               status=INFEASIBLE, active_set=(),
                               clf_dropped=clf_dropped, infeasible=True,
                               target_distance=target_distance)
        return u, diag
    u = sol.z[:n]
    diag = StepDiagnostics(V=V, delta=float(sol.z[n]), h=h_vals, field_d=field_d,
                           status=OPTIMAL, active_set=sol.active_set,
                           clf_dropped=clf_dropped,
                           target_distance=target_distance)
    return u, diag
