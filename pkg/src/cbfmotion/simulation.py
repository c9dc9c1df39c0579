"""Discrete-time rollout of the velocity-controlled arm in a moving world.

The arm is a single integrator (commanded joint velocities integrate
directly), stepped with explicit Euler at a fixed dt while obstacles and the
task-space target advance linearly.  Rollouts terminate on the first of
reaching the goal, touching an obstacle (raw signed distance below zero), or
running out the clock.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .controller import (CDF_TARGET, ControllerVariant, EnvironmentState, JointGoal,
                         Obstacle, TaskTarget, control_step)
from .distance_fields import UnreachablePointError, cdf_distance
from .kinematics import PlanarArm, closest_point_on_arm, default_arm, forward_kinematics

SUCCESS = "success"
COLLISION = "collision"
TIMEOUT = "timeout"
INFEASIBLE_STALL = "infeasible_stall"
REJECTED = "rejected"


class ScenarioError(ValueError):
    """Raised for unusable scenarios (initial collision, malformed files)."""


@dataclass
class Scenario:
    """One rollout description: arm, initial state, environment, horizon."""

    arm: PlanarArm
    initial_q: np.ndarray
    env_initial: EnvironmentState
    variant: ControllerVariant
    dt: float = 0.1
    t_max: float = 20.0
    success_tolerance: float | None = None
    seed: int | None = None  # provenance only; rollouts are deterministic

    def __post_init__(self):
        self.initial_q = np.asarray(self.initial_q, dtype=float)
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def tolerance(self) -> float:
        return self.success_tolerance if self.success_tolerance is not None else self.variant.eps_clf


@dataclass
class TrajectoryLog:
    """Per-step record of a rollout plus its outcome and summary metrics.

    Arrays are stacked over the executed control steps: `d` holds raw signed
    distances (meters, collision test), `h` the margined values of the
    variant's own distance field.  time_to_reach is None unless the rollout
    succeeded; path_length sums the per-step Euclidean norm of the stacked
    displacements of every joint frame and the end-effector.
    """

    t: np.ndarray
    q: np.ndarray
    u: np.ndarray
    V: np.ndarray
    delta: np.ndarray
    d: np.ndarray
    h: np.ndarray
    status: list[str]
    outcome: str
    time_to_reach: float | None
    path_length: float
    final_q: np.ndarray
    final_t: float
    infeasible_steps: int = 0

    @property
    def n_steps(self) -> int:
        return len(self.t)

    def min_raw_distance(self) -> float:
        return float(np.min(self.d)) if self.d.size else np.inf


def _raw_distances(arm: PlanarArm, q, obstacles) -> np.ndarray:
    """Signed centerline distances minus radii, one per obstacle."""
    out = np.zeros(len(obstacles))
    for i, ob in enumerate(obstacles):
        cp = closest_point_on_arm(arm, q, ob.center)
        out[i] = cp.distance - ob.radius - arm.link_radius
    return out


def _reached(arm: PlanarArm, q, env: EnvironmentState, variant: ControllerVariant,
             tol: float) -> bool:
    if isinstance(env.target, JointGoal):
        return float(np.linalg.norm(q - env.target.q)) <= tol
    try:
        return cdf_distance(arm, q, env.target.point,
                            resolution=variant.cdf_resolution) <= tol
    except UnreachablePointError:
        return False


def simulate(scenario: Scenario) -> TrajectoryLog:
    """Roll out one scenario; deterministic given identical inputs."""
    arm = scenario.arm
    variant = scenario.variant
    q = np.array(scenario.initial_q, dtype=float)
    if np.any(q < arm.q_min - 1e-9) or np.any(q > arm.q_max + 1e-9):
        raise ScenarioError("initial configuration violates joint limits")
    env = scenario.env_initial
    if np.any(_raw_distances(arm, q, env.obstacles) < 0):
        raise ScenarioError("initial state is in collision")

    dt = scenario.dt
    tol = scenario.tolerance
    ts, qs, us, Vs, deltas, ds, hs, statuses = [], [], [], [], [], [], [], []
    warm = None
    infeasible_steps = 0
    path_length = 0.0
    outcome = TIMEOUT
    time_to_reach = None
    k = 0
    while True:
        t = k * dt
        raw_d = _raw_distances(arm, q, env.obstacles)
        if _reached(arm, q, env, variant, tol):
            outcome = SUCCESS
            time_to_reach = t
            break
        if np.any(raw_d < 0):
            outcome = COLLISION
            break
        if t > scenario.t_max:
            outcome = TIMEOUT
            break
        u, diag = control_step(arm, q, env, variant, warm_active=warm)
        warm = diag.active_set if not diag.infeasible else None
        if diag.infeasible:
            infeasible_steps += 1
        ts.append(t)
        qs.append(q.copy())
        us.append(u.copy())
        Vs.append(diag.V)
        deltas.append(diag.delta)
        ds.append(raw_d)
        hs.append(diag.h)
        statuses.append(diag.status)

        pose_before = forward_kinematics(arm, q)
        q = np.clip(q + dt * u, arm.q_min, arm.q_max)
        pose_after = forward_kinematics(arm, q)
        moved = pose_after.joint_positions[1:] - pose_before.joint_positions[1:]
        path_length += float(np.linalg.norm(moved.ravel()))
        env = env.advance(dt)
        k += 1

    if outcome == TIMEOUT and statuses and infeasible_steps >= 0.5 * len(statuses):
        outcome = INFEASIBLE_STALL

    n_obs = len(scenario.env_initial.obstacles)
    return TrajectoryLog(
        t=np.asarray(ts), q=np.asarray(qs).reshape(len(ts), -1),
        u=np.asarray(us).reshape(len(ts), -1),
        V=np.asarray(Vs), delta=np.asarray(deltas),
        d=np.asarray(ds).reshape(len(ts), n_obs),
        h=np.asarray(hs).reshape(len(ts), n_obs),
        status=statuses, outcome=outcome, time_to_reach=time_to_reach,
        path_length=path_length, final_q=q, final_t=k * scenario.dt,
        infeasible_steps=infeasible_steps)


# ---------------------------------------------------------------------------
# Canonical scenarios
# ---------------------------------------------------------------------------

#: Default start of the third demo obstacle; it sweeps rightward through the
#: lower workspace.  Not pinned by the scenario description, so configurable.
DEFAULT_THIRD_OBSTACLE = (-3.4, -1.0)


def dynamic_avoidance_scenario(speed: float, variant: ControllerVariant,
                               direction=(0.0, 1.0)) -> Scenario:
    """Single obstacle rising from the lower right at the given speed."""
    arm = default_arm()
    direction = np.asarray(direction, dtype=float)
    env = EnvironmentState(
        obstacles=(Obstacle(center=(2.4, -2.4), radius=0.3,
                            velocity=speed * direction),),
        target=JointGoal(q=np.array([-2.7, 0.5])))
    return Scenario(arm=arm, initial_q=np.array([2.5, 0.5]), env_initial=env,
                    variant=variant)


def reaching_demo_scenario(third_obstacle=DEFAULT_THIRD_OBSTACLE,
                           variant: ControllerVariant | None = None) -> Scenario:
    """Whole-body reaching among three moving obstacles and a falling target."""
    arm = default_arm()
    if variant is None:
        variant = ControllerVariant.from_tag("cdf_tvcbf_tvclf")
    env = EnvironmentState(
        obstacles=(
            Obstacle(center=(1.9, -2.45), radius=0.3, velocity=(0.0, 1.8)),
            Obstacle(center=(2.4, 2.4), radius=0.3, velocity=(-1.5, 0.0)),
            Obstacle(center=third_obstacle, radius=0.3, velocity=(1.5, 0.0)),
        ),
        target=TaskTarget(point=(2.2, 2.3), velocity=(0.0, -0.8)))
    return Scenario(arm=arm, initial_q=np.array([2.5, 0.5]), env_initial=env,
                    variant=variant)


def reaching_demo(third_obstacle=DEFAULT_THIRD_OBSTACLE) -> TrajectoryLog:
    """Run the four-stage whole-body reaching demonstration."""
    return simulate(reaching_demo_scenario(third_obstacle))


# ---------------------------------------------------------------------------
# Trajectory CSV export
# ---------------------------------------------------------------------------

def trajectory_csv(log: TrajectoryLog) -> str:
    """CSV with header t,q1..qn,u1..un,V,delta,d_1..d_No,h_1..h_No,status."""
    n = log.q.shape[1] if log.n_steps else 0
    n_obs = log.d.shape[1] if log.n_steps else 0
    header = (["t"] + [f"q{i+1}" for i in range(n)] + [f"u{i+1}" for i in range(n)]
              + ["V", "delta"] + [f"d_{i+1}" for i in range(n_obs)]
              + [f"h_{i+1}" for i in range(n_obs)] + ["status"])
    lines = [",".join(header)]
    for k in range(log.n_steps):
        vals = ([log.t[k]] + list(log.q[k]) + list(log.u[k])
                + [log.V[k], log.delta[k]] + list(log.d[k]) + list(log.h[k]))
        lines.append(",".join(f"{v:.9g}" for v in vals) + f",{log.status[k]}")
    return "\n".join(lines) + "\n"


def write_trajectory_csv(log: TrajectoryLog, path) -> None:
    Path(path).write_text(trajectory_csv(log))


# ---------------------------------------------------------------------------
# Scenario JSON files
# ---------------------------------------------------------------------------

def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ScenarioError(f"scenario field '{context}{key}' is missing")
    return mapping[key]


def scenario_to_json(scenario: Scenario) -> dict:
    arm = scenario.arm
    target = scenario.env_initial.target
    if isinstance(target, JointGoal):
        target_json = {"type": "joint_goal", "value": target.q.tolist()}
    else:
        target_json = {"type": "task_point", "value": target.point.tolist(),
                       "velocity": target.velocity.tolist()}
    return {
        "arm": {
            "lengths": arm.link_lengths.tolist(),
            "radius": arm.link_radius,
            "limits": {"q_min": arm.q_min.tolist(), "q_max": arm.q_max.tolist(),
                       "u_min": arm.u_min.tolist(), "u_max": arm.u_max.tolist()},
        },
        "initial_q": scenario.initial_q.tolist(),
        "obstacles": [
            {"center": ob.center.tolist(), "radius": ob.radius,
             "velocity": ob.velocity.tolist()}
            for ob in scenario.env_initial.obstacles
        ],
        "target": target_json,
        "dt": scenario.dt,
        "t_max": scenario.t_max,
        "variant": scenario.variant.tag,
        "seeds": scenario.seed,
    }


def scenario_from_json(data: dict, variant_override: str | None = None) -> Scenario:
    """Parse a scenario dict, naming the offending field on errors."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario file must hold a JSON object")
    arm_json = _require(data, "arm", "")
    try:
        arm = PlanarArm(
            link_lengths=_require(arm_json, "lengths", "arm."),
            link_radius=arm_json.get("radius", 0.0),
            **{k: v for k, v in arm_json.get("limits", {}).items()
               if k in ("q_min", "q_max", "u_min", "u_max")},
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"scenario field 'arm' is invalid: {exc}") from exc
    obstacles = []
    for i, ob in enumerate(data.get("obstacles", [])):
        ctx = f"obstacles[{i}]."
        try:
            obstacles.append(Obstacle(center=_require(ob, "center", ctx),
                                      radius=_require(ob, "radius", ctx),
                                      velocity=_require(ob, "velocity", ctx)))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"scenario field 'obstacles[{i}]' is invalid: {exc}") from exc
    target_json = _require(data, "target", "")
    kind = _require(target_json, "type", "target.")
    if kind == "joint_goal":
        target = JointGoal(q=_require(target_json, "value", "target."))
    elif kind == "task_point":
        target = TaskTarget(point=_require(target_json, "value", "target."),
                            velocity=target_json.get("velocity", (0.0, 0.0)))
    else:
        raise ScenarioError(f"scenario field 'target.type' must be "
                            f"'joint_goal' or 'task_point', got {kind!r}")
    tag = variant_override or data.get("variant", "cdf_tvcbf")
    try:
        variant = ControllerVariant.from_tag(tag)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    if isinstance(target, TaskTarget) and variant.clf_mode != CDF_TARGET:
        variant = replace(variant, clf_mode=CDF_TARGET)
    try:
        return Scenario(
            arm=arm,
            initial_q=_require(data, "initial_q", ""),
            env_initial=EnvironmentState(obstacles=tuple(obstacles), target=target),
            variant=variant,
            dt=data.get("dt", 0.1),
            t_max=data.get("t_max", 20.0),
            success_tolerance=data.get("success_tolerance"),
            seed=data.get("seeds"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"scenario is invalid: {exc}") from exc


def load_scenario(path, variant_override: str | None = None) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return scenario_from_json(data, variant_override)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_json(scenario), indent=2) + "\n")
