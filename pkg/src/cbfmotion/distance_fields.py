"""Task-space signed distance field and configuration-space distance field.

The SDF measures meters from an obstacle disc to the arm surface in task
space.  The CDF measures radians of joint motion needed for the arm to touch
a task-space point: its value is the Euclidean joint-space distance to the
contact manifold {q : arm at q touches the point}, and its joint-space
gradient has unit norm wherever the distance is positive.

For the two-link arm the contact manifold decomposes into closed-form
one-parameter families; they are sampled as ordered chains and distances are
taken against the piecewise-linear interpolation, which keeps the field and
its gradients free of sampling jitter.  The point-position gradient follows
from the envelope theorem: only the normal motion of the manifold under a
point displacement changes the distance.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kinematics import PlanarArm, closest_point_on_arm, point_jacobian

_TWO_PI = 2.0 * np.pi


class UnreachablePointError(ValueError):
    """Raised when a task-space point admits no contact configuration."""


@dataclass
class DistanceQuery:
    """Distance plus gradients w.r.t. joint configuration and point position.

    `d` is in meters for the SDF and radians for the CDF.  `degenerate` marks
    queries where the gradient direction is undefined (distance ~ 0); the
    gradients are then zero vectors.
    """

    d: float
    grad_q: np.ndarray
    grad_p: np.ndarray
    degenerate: bool = False


def sdf_eval(arm: PlanarArm, q, obstacle_center, obstacle_radius: float) -> DistanceQuery:
    """Signed distance from an obstacle disc to the arm, with gradients.

    d = (centerline distance) - obstacle_radius - link_radius.  grad_p is the
    unit direction from the closest arm point to the obstacle center; grad_q
    follows from the point Jacobian at the closest arm point, so columns for
    joints beyond the closest link are exactly zero.
    """
    if obstacle_radius < 0:
        raise ValueError("obstacle_radius must be nonnegative")
    center = np.asarray(obstacle_center, dtype=float)
    cp = closest_point_on_arm(arm, q, center)
    d = cp.distance - obstacle_radius - arm.link_radius
    if cp.distance < 1e-12:
        # Center sits exactly on the centerline: no defined outward direction.
        n = arm.n_links
        return DistanceQuery(d=d, grad_q=np.zeros(n), grad_p=np.zeros(2), degenerate=True)
    grad_p = (center - cp.point) / cp.distance
    jac = point_jacobian(arm, q, cp.link_index, cp.arc_fraction)
    grad_q = -(grad_p @ jac)
    return DistanceQuery(d=d, grad_q=grad_q, grad_p=grad_p)


# ---------------------------------------------------------------------------
# Contact sets
# ---------------------------------------------------------------------------

@dataclass
class ContactSet:
    """Sampled contact manifold for one task-space point.

    `configs` holds joint configurations (rows) whose arm centerline lies
    within `tolerance` of touching the point (or, when `contact_radius` > 0,
    the disc of that radius around it).  `chains` groups the same samples into
    ordered one-parameter families; distances are evaluated against their
    piecewise-linear interpolation.  Grid-built sets carry no chains and fall
    back to discrete minima.
    """

    point: np.ndarray
    configs: np.ndarray  # (m, n)
    resolution: float
    tolerance: float
    contact_radius: float = 0.0
    chains: list[np.ndarray] | None = None


def _wrap_angle(x):
    """Map angles to [-pi, pi)."""
    return (np.asarray(x) + np.pi) % _TWO_PI - np.pi


def _limit_grid(lo: float, hi: float, resolution: float) -> np.ndarray:
    count = int(np.floor((hi - lo) / resolution)) + 1
    grid = lo + resolution * np.arange(count)
    if grid[-1] < hi - 1e-12:
        grid = np.append(grid, hi)
    return grid


def _mask_runs(mask: np.ndarray):
    """Index ranges [i, j) of consecutive True entries."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return
    breaks = np.flatnonzero(np.diff(idx) > 1)
    start = 0
    for b in breaks:
        yield idx[start], idx[b] + 1
        start = b + 1
    yield idx[start], idx[-1] + 1


def _split_on_jumps(chain: np.ndarray, threshold: float = 1.0):
    """Split a chain where the last joint jumps (angle wrap, steep branch)."""
    if chain.shape[0] < 2:
        yield chain
        return
    jumps = np.flatnonzero(np.abs(np.diff(chain[:, -1])) > threshold)
    start = 0
    for j in jumps:
        yield chain[start: j + 1]
        start = j + 1
    yield chain[start:]


def _sweep_chain(q1_value: float, q2_grid: np.ndarray) -> np.ndarray:
    return np.column_stack([np.full(q2_grid.size, q1_value), q2_grid])


def _two_link_chains(arm: PlanarArm, point: np.ndarray, radius: float,
                     resolution: float) -> list[np.ndarray]:
    """Contact-manifold chains of a 2-link arm for a point or a disc.

    With radius 0 the families are: (a) the first link aiming through the
    point, second joint free; (b) per base angle with the point within the
    second link's reach, the unique second angle aiming link 2 through it.
    With positive radius each family splits into tangent-line and end-cap
    contacts with the disc rim.  Chains may dip inside the overlap region
    (the other link closer than the radius); that never underestimates the
    distance to the region's boundary for queries outside it.
    """
    l1, l2 = arm.link_lengths
    rho = float(np.linalg.norm(point))
    theta = float(np.arctan2(point[1], point[0]))
    chains: list[np.ndarray] = []
    if rho <= radius + 1e-12:  # disc swallows the base; no contact manifold
        return chains

    q2_grid = _limit_grid(arm.q_min[1], arm.q_max[1], resolution)

    def add_sweep(q1_value: float):
        q1_value = float(_wrap_angle(q1_value))
        if arm.q_min[0] - 1e-12 <= q1_value <= arm.q_max[0] + 1e-12:
            chains.append(_sweep_chain(q1_value, q2_grid))

    # --- link-1 families: straight lines in configuration space
    if radius == 0.0:
        if rho <= l1 + 1e-12:
            add_sweep(theta)
    else:
        if np.sqrt(max(rho * rho - radius * radius, 0.0)) <= l1 + 1e-9:
            off = float(np.arcsin(min(radius / rho, 1.0)))
            add_sweep(theta - off)
            add_sweep(theta + off)
        cos_cap = (l1 * l1 + rho * rho - radius * radius) / (2.0 * l1 * rho)
        if -1.0 <= cos_cap <= 1.0:
            cap = float(np.arccos(cos_cap))
            add_sweep(theta - cap)
            add_sweep(theta + cap)

    # --- link-2 families: curves parameterized by the base angle
    q1_grid = _limit_grid(arm.q_min[0], arm.q_max[0], resolution)
    extras = [theta]
    cos_span = (l1 * l1 + rho * rho - (l2 + radius) ** 2) / (2.0 * l1 * rho)
    if rho > 1e-12 and -1.0 <= cos_span <= 1.0:
        span = float(np.arccos(cos_span))
        extras += [theta - span, theta + span]
    q1_grid = np.unique(np.concatenate([q1_grid, _wrap_angle(np.asarray(extras))]))
    q1_grid = q1_grid[(q1_grid >= arm.q_min[0] - 1e-12) & (q1_grid <= arm.q_max[0] + 1e-12)]
    elbow = l1 * np.stack([np.cos(q1_grid), np.sin(q1_grid)], axis=1)
    w = point - elbow
    rho_w = np.linalg.norm(w, axis=1)
    beta = np.arctan2(w[:, 1], w[:, 0])

    def add_curves(mask: np.ndarray, psi: np.ndarray):
        q2 = _wrap_angle(psi - q1_grid)
        mask = mask & (q2 >= arm.q_min[1] - 1e-12) & (q2 <= arm.q_max[1] + 1e-12)
        for i, j in _mask_runs(mask):
            chain = np.column_stack([q1_grid[i:j], q2[i:j]])
            chains.extend(_split_on_jumps(chain))

    if radius == 0.0:
        add_curves((rho_w <= l2 + 1e-9) & (rho_w > 1e-12), beta)
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            reach_ok = np.sqrt(np.maximum(rho_w**2 - radius**2, 0.0)) <= l2 + 1e-9
            tangent_ok = (rho_w > radius) & reach_ok
            off2 = np.arcsin(np.clip(radius / np.maximum(rho_w, 1e-12), -1.0, 1.0))
            add_curves(tangent_ok, beta - off2)
            add_curves(tangent_ok, beta + off2)
            cos_cap2 = (l2 * l2 + rho_w**2 - radius * radius) / (2.0 * l2 * np.maximum(rho_w, 1e-12))
            cap_ok = (rho_w > 1e-12) & (np.abs(cos_cap2) <= 1.0)
            cap2 = np.arccos(np.clip(cos_cap2, -1.0, 1.0))
            add_curves(cap_ok, beta - cap2)
            add_curves(cap_ok, beta + cap2)

    return [c for c in chains if c.shape[0] > 0]


def _grid_contacts(arm: PlanarArm, point: np.ndarray, resolution: float,
                   contact_radius: float, tolerance: float) -> np.ndarray:
    """Dense joint-space grid search; cost grows as (span/resolution)^n."""
    axes = [_limit_grid(arm.q_min[i], arm.q_max[i], resolution) for i in range(arm.n_links)]
    mesh = np.meshgrid(*axes, indexing="ij")
    configs = np.stack([m.ravel() for m in mesh], axis=1)
    dists = batch_min_distance(arm, configs, point)
    keep = dists <= contact_radius + tolerance
    return configs[keep]


def batch_min_distance(arm: PlanarArm, configs: np.ndarray, point) -> np.ndarray:
    """Centerline distance from the arm to a point, for many configurations."""
    point = np.asarray(point, dtype=float)
    m = configs.shape[0]
    angles = np.cumsum(configs, axis=1)
    steps = arm.link_lengths[None, :, None] * np.stack(
        [np.cos(angles), np.sin(angles)], axis=2)
    joints = np.concatenate([np.zeros((m, 1, 2)), np.cumsum(steps, axis=1)], axis=1)
    best = np.full(m, np.inf)
    for k in range(arm.n_links):
        a = joints[:, k, :]
        ab = joints[:, k + 1, :] - a
        ap = point - a
        t = np.clip(np.einsum("ij,ij->i", ap, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
        d = np.linalg.norm(ap - t[:, None] * ab, axis=1)
        best = np.minimum(best, d)
    return best


def cdf_contact_set(arm: PlanarArm, point, resolution: float = 0.005,
                    contact_radius: float = 0.0) -> ContactSet:
    """Build the sampled contact manifold for a task-space point.

    For the 2-link arm the families are closed-form chains sampled at
    `resolution`; for more links a dense grid search is used, keeping
    configurations within resolution * reach of contact.  Raises
    UnreachablePointError when the point lies beyond the arm's reach or every
    candidate violates the joint limits.
    """
    point = np.asarray(point, dtype=float)
    if point.shape != (2,):
        raise ValueError("point must be planar")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if np.linalg.norm(point) > arm.reach + contact_radius + 1e-12:
        raise UnreachablePointError(
            f"point {point.tolist()} lies beyond the arm's reach {arm.reach:.3f}")
    tolerance = resolution * arm.reach
    chains = None
    if arm.n_links == 2:
        chains = _two_link_chains(arm, point, contact_radius, resolution)
        configs = np.vstack(chains) if chains else np.empty((0, 2))
    else:
        configs = _grid_contacts(arm, point, resolution, contact_radius, tolerance)
    if configs.shape[0] == 0:
        raise UnreachablePointError(
            f"no contact configuration within joint limits for point {point.tolist()}")
    return ContactSet(point=point, configs=configs, resolution=resolution,
                      tolerance=tolerance, contact_radius=contact_radius, chains=chains)


# ---------------------------------------------------------------------------
# CDF evaluation
# ---------------------------------------------------------------------------

def _nearest_on_chains(q: np.ndarray, chains: list[np.ndarray]) -> tuple[float, np.ndarray]:
    """Closest point to q over piecewise-linear chains in joint space."""
    best_d = np.inf
    best_q = None
    for chain in chains:
        if chain.shape[0] == 1:
            d = float(np.linalg.norm(q - chain[0]))
            if d < best_d:
                best_d, best_q = d, chain[0]
            continue
        a = chain[:-1]
        ab = chain[1:] - a
        denom = np.einsum("ij,ij->i", ab, ab)
        denom[denom < 1e-300] = 1.0
        t = np.clip(np.einsum("ij,ij->i", q - a, ab) / denom, 0.0, 1.0)
        proj = a + t[:, None] * ab
        dists = np.linalg.norm(q - proj, axis=1)
        i = int(np.argmin(dists))
        if dists[i] < best_d:
            best_d, best_q = float(dists[i]), proj[i]
    return best_d, best_q


def _nearest_config(q: np.ndarray, contacts: ContactSet) -> tuple[float, np.ndarray]:
    if contacts.chains:
        return _nearest_on_chains(q, contacts.chains)
    diffs = q - contacts.configs
    dists = np.linalg.norm(diffs, axis=1)
    i = int(np.argmin(dists))
    return float(dists[i]), contacts.configs[i]


def cdf_distance(arm: PlanarArm, q, point, resolution: float = 0.005,
                 contact_radius: float = 0.0) -> float:
    """Configuration-space distance only (no gradients); cheaper than cdf_eval."""
    q = np.asarray(q, dtype=float)
    contacts = cdf_contact_set(arm, point, resolution, contact_radius)
    return _nearest_config(q, contacts)[0]


def _fd_grad_p(arm: PlanarArm, q: np.ndarray, point: np.ndarray, d: float,
               resolution: float, contact_radius: float, step: float) -> np.ndarray:
    """Central finite differences over the point, one-sided at the reach edge."""
    grad_p = np.zeros(2)
    for axis in range(2):
        dp = np.zeros(2)
        dp[axis] = step
        vals = []
        for sign in (1.0, -1.0):
            try:
                vals.append(cdf_distance(arm, q, point + sign * dp, resolution, contact_radius))
            except UnreachablePointError:
                vals.append(None)
        d_plus, d_minus = vals
        if d_plus is not None and d_minus is not None:
            grad_p[axis] = (d_plus - d_minus) / (2.0 * step)
        elif d_plus is not None:
            grad_p[axis] = (d_plus - d) / step
        elif d_minus is not None:
            grad_p[axis] = (d - d_minus) / step
    return grad_p


def cdf_eval(arm: PlanarArm, q, point, resolution: float = 0.005,
             contact_radius: float = 0.0, grad_p_step: float = 1e-3) -> DistanceQuery:
    """Configuration-space distance with gradients.

    d is the joint-space Euclidean distance (no angle wrapping: the +/- pi
    limits bound the chart) from q to the nearest contact configuration.
    grad_q points away from that minimizer and has unit norm whenever d > 0.
    grad_p comes from central finite differences over the point, rebuilding
    the local contact sets; the piecewise-linear chain distance keeps the
    differences clean away from branch switches, and the reach boundary falls
    back to a one-sided difference.
    """
    q = np.asarray(q, dtype=float)
    point = np.asarray(point, dtype=float)
    contacts = cdf_contact_set(arm, point, resolution, contact_radius)
    d, q_star = _nearest_config(q, contacts)

    if d < 1e-12:
        return DistanceQuery(d=d, grad_q=np.zeros(arm.n_links), grad_p=np.zeros(2),
                             degenerate=True)
    grad_q = (q - q_star) / d
    grad_p = _fd_grad_p(arm, q, point, d, resolution, contact_radius, grad_p_step)
    return DistanceQuery(d=d, grad_q=grad_q, grad_p=grad_p)


# ---------------------------------------------------------------------------
# Binary contact-set cache
# ---------------------------------------------------------------------------

_CACHE_MAGIC = b"CDFC"
_CACHE_VERSION = 1


def arm_fingerprint(arm: PlanarArm) -> bytes:
    """8-byte digest of the arm's geometry and limits."""
    blob = np.concatenate([
        arm.link_lengths, [arm.link_radius], arm.q_min, arm.q_max, arm.u_min, arm.u_max,
    ]).astype(float).tobytes()
    return hashlib.sha256(blob).digest()[:8]


def save_contact_set(path, arm: PlanarArm, contacts: ContactSet) -> None:
    """Write one contact set: header (arm hash, resolution, count), flat configs."""
    configs = np.ascontiguousarray(contacts.configs, dtype=np.float64)
    header = struct.pack(
        "<4sI8sddddII", _CACHE_MAGIC, _CACHE_VERSION, arm_fingerprint(arm),
        contacts.resolution, contacts.contact_radius,
        float(contacts.point[0]), float(contacts.point[1]),
        configs.shape[0], configs.shape[1])
    Path(path).write_bytes(header + configs.tobytes())


def load_contact_set(path, arm: PlanarArm) -> ContactSet:
    raw = Path(path).read_bytes()
    head_size = struct.calcsize("<4sI8sddddII")
    magic, version, digest, resolution, radius, px, py, count, width = struct.unpack(
        "<4sI8sddddII", raw[:head_size])
    if magic != _CACHE_MAGIC or version != _CACHE_VERSION:
        raise ValueError("not a contact-set cache file")
    if digest != arm_fingerprint(arm):
        raise ValueError("contact-set cache was built for a different arm")
    configs = np.frombuffer(raw[head_size:], dtype=np.float64).reshape(count, width).copy()
    return ContactSet(point=np.array([px, py]), configs=configs, resolution=resolution,
                      tolerance=resolution * arm.reach, contact_radius=radius)


class ContactSetCache:
    """In-memory cache of contact sets keyed by quantized point and resolution.

    Points are quantized to 1e-3 m.  When a directory is given, entries are
    persisted as individual binary files (useful for the grid-based sets of
    arms with three or more links, which are expensive to rebuild; the file
    format drops chain structure, so reloaded sets use discrete minima).
    """

    QUANTUM = 1e-3

    def __init__(self, arm: PlanarArm, directory=None):
        self.arm = arm
        self.directory = Path(directory) if directory is not None else None
        self._entries: dict[tuple, ContactSet] = {}

    def _key(self, point: np.ndarray, resolution: float, contact_radius: float) -> tuple:
        qx = int(round(point[0] / self.QUANTUM))
        qy = int(round(point[1] / self.QUANTUM))
        return (qx, qy, float(resolution), float(contact_radius))

    def _path_for(self, key: tuple) -> Path:
        name = hashlib.sha256(repr(key).encode()).hexdigest()[:16]
        return self.directory / f"contact_{name}.bin"

    def get_or_build(self, point, resolution: float = 0.005,
                     contact_radius: float = 0.0) -> ContactSet:
        point = np.asarray(point, dtype=float)
        key = self._key(point, resolution, contact_radius)
        if key in self._entries:
            return self._entries[key]
        if self.directory is not None:
            path = self._path_for(key)
            if path.exists():
                contacts = load_contact_set(path, self.arm)
                self._entries[key] = contacts
                return contacts
        contacts = cdf_contact_set(self.arm, point, resolution, contact_radius)
        self._entries[key] = contacts
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            save_contact_set(self._path_for(key), self.arm, contacts)
        return contacts
