"""Randomized scenario batches and controller comparison statistics.

Three scenario families of increasing difficulty spawn obstacles in fixed
boxes with randomized positions and speeds; every controller variant runs the
same seeded trials.  Per-trial substreams derive from (master seed, family,
trial index) so scenario draws never shift when the variant list changes.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .controller import (BENCHMARK_TAGS, ControllerVariant, EnvironmentState, JointGoal,
                         Obstacle)
from .kinematics import default_arm
from .simulation import SUCCESS, Scenario, ScenarioError, TrajectoryLog, _raw_distances, simulate

_FAMILY_CODES = {"S1": 1, "S2": 2, "S3": 3}

_AXES = {"x": np.array([1.0, 0.0]), "y": np.array([0.0, 1.0])}


@dataclass(frozen=True)
class ObstacleSpec:
    """Spawn box and velocity law for one randomized obstacle."""

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    speed_range: tuple[float, float]
    axis: str = "x"
    direction: float = 1.0


@dataclass(frozen=True)
class ScenarioFamily:
    """A named batch of randomized trials sharing one obstacle layout."""

    name: str
    obstacle_specs: tuple[ObstacleSpec, ...]
    trial_count: int = 100
    master_seed: int = 42
    obstacle_radius: float = 0.3
    initial_q: tuple[float, float] = (2.5, 0.5)
    goal_q: tuple[float, float] = (-2.7, 0.5)
    dt: float = 0.1
    t_max: float = 20.0


def family_s1(trial_count: int = 100, master_seed: int = 42) -> ScenarioFamily:
    """One obstacle sweeping leftward through the upper workspace."""
    return ScenarioFamily(
        name="S1",
        obstacle_specs=(ObstacleSpec((1.5, 3.5), (1.5, 3.5), (2.0, 4.0), "x", -1.0),),
        trial_count=trial_count, master_seed=master_seed)


def family_s2(trial_count: int = 100, master_seed: int = 42,
              literal_signs: bool = False) -> ScenarioFamily:
    """Adds a faster second obstacle from the lower right.

    By default both obstacles move toward the workspace (first leftward,
    second upward).  literal_signs flips to the published sign convention
    (first rightward, second downward), which sends both away from the arm.
    """
    dir1, dir2 = (1.0, -1.0) if literal_signs else (-1.0, 1.0)
    return ScenarioFamily(
        name="S2",
        obstacle_specs=(
            ObstacleSpec((1.5, 3.5), (1.5, 3.5), (3.0, 5.0), "x", dir1),
            ObstacleSpec((1.5, 3.0), (-3.0, -1.5), (3.0, 5.0), "y", dir2),
        ),
        trial_count=trial_count, master_seed=master_seed)


def family_s3(trial_count: int = 100, master_seed: int = 42) -> ScenarioFamily:
    """Three obstacles, speeds matched to the 1-3 m/s band."""
    return ScenarioFamily(
        name="S3",
        obstacle_specs=(
            ObstacleSpec((1.5, 3.5), (1.5, 3.5), (1.0, 3.0), "x", -1.0),
            ObstacleSpec((1.5, 3.0), (-3.0, -1.5), (1.0, 3.0), "y", 1.0),
            ObstacleSpec((-3.0, -1.5), (-3.0, -1.5), (1.0, 3.0), "x", 1.0),
        ),
        trial_count=trial_count, master_seed=master_seed)


def default_families(trial_count: int = 100, master_seed: int = 42) -> list[ScenarioFamily]:
    return [family_s1(trial_count, master_seed),
            family_s2(trial_count, master_seed),
            family_s3(trial_count, master_seed)]


FAMILY_BUILDERS = {"S1": family_s1, "S2": family_s2, "S3": family_s3}

_MAX_RESAMPLES = 100


def _draw_environment(family: ScenarioFamily, rng: np.random.Generator) -> EnvironmentState:
    obstacles = []
    for spec in family.obstacle_specs:
        center = np.array([rng.uniform(*spec.x_range), rng.uniform(*spec.y_range)])
        speed = rng.uniform(*spec.speed_range)
        velocity = spec.direction * speed * _AXES[spec.axis]
        obstacles.append(Obstacle(center=center, radius=family.obstacle_radius,
                                  velocity=velocity))
    return EnvironmentState(obstacles=tuple(obstacles),
                            target=JointGoal(q=np.asarray(family.goal_q)))


def generate_trials(family: ScenarioFamily,
                    variant: ControllerVariant | None = None) -> list[Scenario]:
    """Deterministic seeded trial scenarios for one family.

    Trials whose initial draw collides with the arm (or already satisfies the
    goal) are resampled from the same substream, up to a bounded number of
    retries, then skipped.  A family whose every trial skips is misconfigured.
    """
    if family.trial_count <= 0:
        raise ValueError("trial_count must be positive")
    if family.name not in _FAMILY_CODES:
        raise ValueError(f"unknown family name {family.name!r}")
    arm = default_arm()
    q0 = np.asarray(family.initial_q, dtype=float)
    goal = np.asarray(family.goal_q, dtype=float)
    if variant is None:
        variant = ControllerVariant.from_tag("cdf_tvcbf")
    scenarios = []
    for trial in range(family.trial_count):
        seq = np.random.SeedSequence([family.master_seed, _FAMILY_CODES[family.name], trial])
        rng = np.random.default_rng(seq)
        for _ in range(_MAX_RESAMPLES):
            env = _draw_environment(family, rng)
            if np.any(_raw_distances(arm, q0, env.obstacles) < 0):
                continue
            if np.linalg.norm(q0 - goal) <= variant.eps_clf:
                continue
            scenarios.append(Scenario(arm=arm, initial_q=q0.copy(), env_initial=env,
                                      variant=variant, dt=family.dt, t_max=family.t_max,
                                      seed=trial))
            break
        # else: trial skipped; success statistics use the surviving trials
    if not scenarios:
        raise ScenarioError(
            f"family {family.name}: every spawn collides with the initial pose")
    return scenarios


@dataclass
class VariantStats:
    """Aggregate metrics for one (family, variant) cell.

    Time statistics follow the benchmark convention: the average counts failed
    trials at t_max, min/max and all path-length statistics cover successful
    trials only (None when nothing succeeded).
    """

    n_trials: int
    n_success: int
    success_rate: float
    time_min: float | None
    time_max: float | None
    time_avg: float
    path_min: float | None
    path_max: float | None
    path_avg: float | None


def aggregate(logs: list[TrajectoryLog], t_max: float) -> VariantStats:
    n = len(logs)
    times_all = [lg.time_to_reach if lg.outcome == SUCCESS else t_max for lg in logs]
    success = [lg for lg in logs if lg.outcome == SUCCESS]
    times_ok = [lg.time_to_reach for lg in success]
    paths_ok = [lg.path_length for lg in success]
    return VariantStats(
        n_trials=n,
        n_success=len(success),
        success_rate=len(success) / n if n else 0.0,
        time_min=min(times_ok) if times_ok else None,
        time_max=max(times_ok) if times_ok else None,
        time_avg=float(np.mean(times_all)) if times_all else 0.0,
        path_min=min(paths_ok) if paths_ok else None,
        path_max=max(paths_ok) if paths_ok else None,
        path_avg=float(np.mean(paths_ok)) if paths_ok else None)


@dataclass
class BenchReport:
    """Statistics per (family name, variant tag), plus optional raw logs."""

    entries: dict[tuple[str, str], VariantStats] = field(default_factory=dict)
    logs: dict[tuple[str, str], list[TrajectoryLog]] = field(default_factory=dict)

    def stats(self, family: str, tag: str) -> VariantStats:
        return self.entries[(family, tag)]


def _run_one(scenario: Scenario) -> TrajectoryLog:
    return simulate(scenario)


def _worker_count() -> int:
    raw = os.environ.get("CBFMOTION_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_benchmark(families, variants=BENCHMARK_TAGS, keep_logs: bool = False,
                  max_workers: int | None = None) -> BenchReport:
    """Roll out every (family, trial, variant) combination and aggregate.

    Trials are independent; CBFMOTION_THREADS (or max_workers) caps the
    process fan-out.  Aggregation is a deterministic reduction over trial
    indices, so results do not depend on completion order.
    """
    if isinstance(families, ScenarioFamily):
        families = [families]
    report = BenchReport()
    workers = max_workers if max_workers is not None else _worker_count()
    for family in families:
        base_trials = generate_trials(family)
        for tag in variants:
            variant = ControllerVariant.from_tag(tag)
            scenarios = [replace(trial, variant=variant) for trial in base_trials]
            if workers > 1 and len(scenarios) > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    logs = list(pool.map(_run_one, scenarios, chunksize=4))
            else:
                logs = [simulate(s) for s in scenarios]
            report.entries[(family.name, tag)] = aggregate(logs, family.t_max)
            if keep_logs:
                report.logs[(family.name, tag)] = logs
    return report


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------

def _fmt(value, width: int = 6, decimals: int = 2) -> str:
    if value is None:
        return "-".rjust(width)
    return f"{value:.{decimals}f}".rjust(width)


def report_csv(report: BenchReport) -> str:
    lines = ["family,variant,success_rate,time_min,time_max,time_avg,"
             "path_min,path_max,path_avg,n_trials"]
    for (family, tag) in sorted(report.entries):
        s = report.entries[(family, tag)]
        cells = [family, tag, f"{s.success_rate:.4f}"]
        for v in (s.time_min, s.time_max, s.time_avg, s.path_min, s.path_max, s.path_avg):
            cells.append("" if v is None else f"{v:.6f}")
        cells.append(str(s.n_trials))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def report_table(report: BenchReport) -> str:
    """Fixed-width table: time / path / success-rate blocks per family."""
    from .controller import DISPLAY_NAMES

    families = sorted({f for f, _ in report.entries})
    tags = []
    for _, tag in sorted(report.entries):
        if tag not in tags:
            tags.append(tag)
    name_w = max(len(DISPLAY_NAMES.get(t, t)) for t in tags) + 2
    header1 = " " * name_w
    header2 = "Method".ljust(name_w)
    for fam in families:
        header1 += f"| {fam:^47} "
        header2 += "|  t_min  t_max  t_avg  p_min  p_max  p_avg   rate "
    lines = [header1, header2, "-" * len(header2)]
    for tag in tags:
        row = DISPLAY_NAMES.get(tag, tag).ljust(name_w)
        for fam in families:
            s = report.entries.get((fam, tag))
            if s is None:
                row += "|" + " " * 49
                continue
            row += ("| " + _fmt(s.time_min) + " " + _fmt(s.time_max) + " "
                    + _fmt(s.time_avg) + " " + _fmt(s.path_min) + " "
                    + _fmt(s.path_max) + " " + _fmt(s.path_avg) + " "
                    + _fmt(s.success_rate, 6, 2) + " ")
        lines.append(row)
    return "\n".join(lines) + "\n"
