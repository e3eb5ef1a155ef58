"""Phase-space planning and robust control for non-periodic bipedal gaits."""

from .automaton import (AutomatonConfig, DiscreteMode, Disturbance,
                        DisturbancePattern, EventClass, EventKind, HybridState,
                        HybridTrace, ManifoldGuard, PositionGuard,
                        ProgressionGuard, RecoveryHooks, StepPolicy,
                        TransitionEvent, VelocityGuard, apply_transition,
                        classify_disturbance, guard_crossed, inject_disturbance,
                        run_plan)
from .controller import (DPConfig, PolicyTable, RecoverabilityMask,
                         estimate_recoverability, lyapunov_rate,
                         max_tube_radius, replan_foot, rollout_policy,
                         saturate_control, solve_dp, stage_cost)
from .manifold import (BundleSpec, ManifoldDescriptor, bundle_contains,
                       sensitivity_norm, sigma_apex, sigma_general, zeta)
from .pendulum import (GRAVITY, LateralState, PathSurface, SagittalState,
                       StepParameters, Trajectory, closed_form_state,
                       integrate_trajectory, lateral_derivative,
                       omega_from_surface, orbital_energy, sagittal_derivative,
                       surface_height)
from .planner import (ApexKeyframe, QuinticSegment, StepManifold, TerrainSpec,
                      TerrainStep, TransitionPoint, find_transition,
                      fit_multicontact, generate_nominal, generate_terrain,
                      keyframes_for_terrain, lateral_foot_search,
                      progression_map)
from .scenario import (RunReport, Scenario, parse_scenario, run_scenario,
                       serialize_scenario)

__version__ = "0.1.0"
