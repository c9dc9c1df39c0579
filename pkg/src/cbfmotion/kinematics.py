"""Planar n-link arm geometry: forward kinematics, point Jacobians, closest points.

The arm is a chain of revolute joints in the plane with the base pinned at the
origin.  Joint angles are relative (each measured from the previous link), so
link k points along the cumulative angle q_1 + ... + q_{k+1}.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


def _as_vector(x, n: int, name: str) -> np.ndarray:
    """Broadcast a scalar or sequence to a float vector of length n."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must be a scalar or length-{n} vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class PlanarArm:
    """Kinematic description of a planar revolute arm with physical limits.

    link_lengths are in meters, angle limits in radians, velocity limits in
    rad/s.  link_radius is the half-thickness of the links; obstacle clearance
    is usually carried by the obstacle radius instead.
    """

    link_lengths: np.ndarray
    link_radius: float = 0.0
    q_min: np.ndarray = -np.pi
    q_max: np.ndarray = np.pi
    u_min: np.ndarray = -2.0
    u_max: np.ndarray = 2.0

    def __post_init__(self):
        lengths = np.atleast_1d(np.asarray(self.link_lengths, dtype=float))
        n = lengths.size
        object.__setattr__(self, "link_lengths", lengths)
        object.__setattr__(self, "link_radius", float(self.link_radius))
        for name in ("q_min", "q_max", "u_min", "u_max"):
            object.__setattr__(self, name, _as_vector(getattr(self, name), n, name))
        if not np.all(lengths > 0):
            raise ValueError("all link lengths must be positive")
        if self.link_radius < 0:
            raise ValueError("link_radius must be nonnegative")
        if not np.all(self.q_min < self.q_max):
            raise ValueError("q_min must be elementwise below q_max")
        if not np.all(self.u_min < self.u_max):
            raise ValueError("u_min must be elementwise below u_max")

    @property
    def n_links(self) -> int:
        return self.link_lengths.size

    @property
    def reach(self) -> float:
        """Maximum distance from the base to any point on the arm."""
        return float(np.sum(self.link_lengths))


def default_arm() -> PlanarArm:
    """Two-link arm used throughout the planar experiments."""
    return PlanarArm(link_lengths=(2.0, 2.0), link_radius=0.0,
                     q_min=-np.pi, q_max=np.pi, u_min=-2.0, u_max=2.0)


@dataclass(frozen=True)
class ArmPose:
    """Joint frame positions for one configuration; base at index 0."""

    joint_positions: np.ndarray  # (n+1, 2)

    @property
    def link_segments(self) -> list[tuple[np.ndarray, np.ndarray]]:
        pts = self.joint_positions
        return [(pts[k], pts[k + 1]) for k in range(len(pts) - 1)]

    @property
    def tip(self) -> np.ndarray:
        return self.joint_positions[-1]


def _check_config(arm: PlanarArm, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (arm.n_links,):
        raise ValueError(f"configuration must have shape ({arm.n_links},), got {q.shape}")
    return q


def forward_kinematics(arm: PlanarArm, q) -> ArmPose:
    """Positions of all joint frames (base, joints, tip) for configuration q."""
    q = _check_config(arm, q)
    angles = np.cumsum(q)
    steps = arm.link_lengths[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    positions = np.vstack([np.zeros((1, 2)), np.cumsum(steps, axis=0)])
    return ArmPose(joint_positions=positions)


def point_on_link(pose: ArmPose, link_index: int, arc_fraction: float) -> np.ndarray:
    """Point at a fractional position along one link's centerline."""
    a, b = pose.joint_positions[link_index], pose.joint_positions[link_index + 1]
    return (1.0 - arc_fraction) * a + arc_fraction * b


def point_jacobian(arm: PlanarArm, q, link_index: int, arc_fraction: float) -> np.ndarray:
    """Jacobian (2 x n) of a body point's planar position w.r.t. joint angles.

    The point sits at `arc_fraction` along link `link_index`.  Column i is the
    90-degree rotation of the lever arm from joint i to the point; joints past
    the link carrying the point contribute exactly zero.
    """
    q = _check_config(arm, q)
    if not 0 <= link_index < arm.n_links:
        raise ValueError(f"link_index {link_index} out of range [0, {arm.n_links})")
    if not 0.0 <= arc_fraction <= 1.0:
        raise ValueError(f"arc_fraction must lie in [0, 1], got {arc_fraction}")
    pose = forward_kinematics(arm, q)
    point = point_on_link(pose, link_index, arc_fraction)
    jac = np.zeros((2, arm.n_links))
    lever = point - pose.joint_positions[: link_index + 1]
    jac[0, : link_index + 1] = -lever[:, 1]
    jac[1, : link_index + 1] = lever[:, 0]
    return jac


class ClosestPoint(NamedTuple):
    link_index: int
    arc_fraction: float
    point: np.ndarray
    distance: float


def closest_point_on_arm(arm: PlanarArm, q, p) -> ClosestPoint:
    """Closest point on the arm's link centerlines to a planar point.

    Ties between links resolve to the lowest link index.  The distance is to
    the centerline; link/obstacle radii are applied by callers.
    """
    q = _check_config(arm, q)
    p = np.asarray(p, dtype=float)
    if p.shape != (2,) or not np.all(np.isfinite(p)):
        raise ValueError("query point must be a finite planar point")
    pose = forward_kinematics(arm, q)
    starts = pose.joint_positions[:-1]
    ends = pose.joint_positions[1:]
    ab = ends - starts
    ap = p - starts
    t = np.einsum("ij,ij->i", ap, ab) / np.einsum("ij,ij->i", ab, ab)
    t = np.clip(t, 0.0, 1.0)
    candidates = starts + t[:, None] * ab
    dists = np.linalg.norm(p - candidates, axis=1)
    k = int(np.argmin(dists))  # argmin keeps the first (lowest) index on ties
    return ClosestPoint(k, float(t[k]), candidates[k], float(dists[k]))
