"""Safety-critical reactive motion generation for planar arms.

Time-varying control barrier and Lyapunov conditions built on signed and
configuration-space distance fields, assembled into small dense QPs solved by
an in-package active-set method, with a simulator and a seeded benchmark
harness for dynamic-obstacle scenarios.
"""

from .benchmark import (BenchReport, ObstacleSpec, ScenarioFamily, VariantStats,
                        default_families, family_s1, family_s2, family_s3,
                        generate_trials, report_csv, report_table, run_benchmark)
from .constraints import (ClassK, ConstraintRow, baseline_rows, joint_limit_rows,
                          tvcbf_row, tvclf_row)
from .controller import (BENCHMARK_TAGS, DISPLAY_NAMES, VARIANT_TAGS, ControllerVariant,
                         EnvironmentState, JointGoal, Obstacle, StepDiagnostics,
                         TaskTarget, control_step)
from .distance_fields import (ContactSet, ContactSetCache, DistanceQuery,
                              UnreachablePointError, cdf_contact_set, cdf_distance,
                              cdf_eval, load_contact_set, save_contact_set, sdf_eval)
from .kinematics import (ArmPose, ClosestPoint, PlanarArm, closest_point_on_arm,
                         default_arm, forward_kinematics, point_jacobian, point_on_link)
from .qp_solver import (INFEASIBLE, OPTIMAL, QpProblem, QpSolution, dump_problem,
                        solve, solve_by_enumeration, verify_kkt)
from .simulation import (COLLISION, INFEASIBLE_STALL, SUCCESS, TIMEOUT, Scenario,
                         ScenarioError, TrajectoryLog, dynamic_avoidance_scenario,
                         load_scenario, reaching_demo, reaching_demo_scenario,
                         save_scenario, scenario_from_json, scenario_to_json,
                         simulate, trajectory_csv, write_trajectory_csv)

__version__ = "0.1.0"
