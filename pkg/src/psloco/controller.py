"""Dynamic-programming recovery control, recoverability bundles, foot re-planning.

The recovery problem is discretized with the sagittal position as the stage
variable and the sagittal velocity as the single state.  Backward induction
searches a finite control grid exhaustively; the resulting policy table is
looked up online and blended inside the boundary layer to avoid chattering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InfeasibleReplanError, ParameterError
from .manifold import ManifoldDescriptor, sigma_apex_from_v2


@dataclass(frozen=True)
class DPConfig:
    """Grids, weights, and model constants for the recovery optimization.

    Defaults reproduce the reference recovery scenario: a single step with
    the foot at 1.2 m, a 0.6 m/s apex target, and 13-level control grids.
    """

    stage_min: float = 0.9
    stage_max: float = 1.5
    stage_res: float = 0.01
    state_min: float = 0.03
    state_max: float = 1.5
    state_res: float = 0.01
    omega_min: float = 2.83
    omega_max: float = 3.43
    omega_levels: int = 13
    tau_min: float = -3.0
    tau_max: float = 3.0
    tau_levels: int = 13
    alpha: float = 100.0
    beta: float = 4.0e4
    gamma1: float = 5.0
    gamma2: float = 5.0
    discount: float = 1.0
    omega_ref: float = 3.13
    tau_ref: float = 0.0
    x_foot: float = 1.2
    xdot_apex: float = 0.6
    mass: float = 1.0
    gravity: float = 9.81

    def __post_init__(self):
        if self.stage_res <= 0.0 or self.state_res <= 0.0:
            raise ParameterError("grid resolutions must be positive")
        if self.stage_max <= self.stage_min or self.state_max <= self.state_min:
            raise ParameterError("grid ranges must be nonempty")
        if not 0.0 <= self.discount <= 1.0:
            raise ParameterError(f"discount must lie in [0, 1], got {self.discount}")
        if self.omega_levels < 1 or self.tau_levels < 1:
            raise ParameterError("control grids need at least one level")

    def stages(self) -> np.ndarray:
        n = int(round((self.stage_max - self.stage_min) / self.stage_res)) + 1
        return self.stage_min + self.stage_res * np.arange(n)

    def states(self) -> np.ndarray:
        n = int(round((self.state_max - self.state_min) / self.state_res)) + 1
        return self.state_min + self.state_res * np.arange(n)

    def omegas(self) -> np.ndarray:
        return np.linspace(self.omega_min, self.omega_max, self.omega_levels)

    def taus(self) -> np.ndarray:
        return np.linspace(self.tau_min, self.tau_max, self.tau_levels)

    def descriptor(self) -> ManifoldDescriptor:
        return ManifoldDescriptor(self.xdot_apex, self.x_foot, self.omega_ref)

    def state_index(self, xdot: float) -> int:
        i = int(round((xdot - self.state_min) / self.state_res))
        return min(max(i, 0), len(self.states()) - 1)

    def stage_index(self, x: float) -> int:
        n = int(round((x - self.stage_min) / self.stage_res))
        return min(max(n, 0), len(self.stages()) - 1)


def nominal_velocity(cfg: DPConfig, x) -> float:
    """Velocity of the nominal (sigma = 0) manifold at sagittal position x."""
    rel = np.asarray(x) - cfg.x_foot
    return np.sqrt(cfg.xdot_apex ** 2 + cfg.omega_ref ** 2 * rel * rel)


def stage_cost(sigma, tau_y, omega, cfg: DPConfig, stage_width: float):
    """Running cost over one stage: midpoint integrand times stage width."""
    dev = omega - cfg.omega_ref
    return (cfg.beta * sigma * sigma + cfg.gamma1 * tau_y * tau_y
            + cfg.gamma2 * dev * dev) * stage_width


def advance_v2(v2, x0: float, x1: float, omega, tau, cfg: DPConfig):
    """Exact squared-velocity update across [x0, x1] under constant controls.

    Integrates d(xdot^2)/dx = 2*xddot for the pendulum field; valid while the
    velocity stays positive across the stage.
    """
    w2 = omega * omega
    rel1 = x1 - cfg.x_foot
    rel0 = x0 - cfg.x_foot
    return v2 + w2 * (rel1 * rel1 - rel0 * rel0) \
        - 2.0 * w2 * tau / (cfg.mass * cfg.gravity) * (x1 - x0)


@dataclass
class PolicyTable:
    """Stage-by-state grids of optimal controls and cost-to-go values."""

    cfg: DPConfig
    omega: np.ndarray    # (n_stages, n_states) control applied leaving stage n
    tau: np.ndarray      # (n_stages, n_states)
    cost: np.ndarray     # (n_stages + 1, n_states) cost-to-go incl. terminal

    def lookup(self, x: float, xdot: float) -> tuple[float, float]:
        """Quantize a continuous state to the grid and return its control pair."""
        n = min(self.cfg.stage_index(x), self.omega.shape[0] - 1)
        i = self.cfg.state_index(xdot)
        return float(self.omega[n, i]), float(self.tau[n, i])


def _max_stage_cost(cfg: DPConfig) -> float:
    """Largest running cost over the full stage/state/control grid."""
    stages = cfg.stages()
    states = cfg.states()
    desc = cfg.descriptor()
    v2 = states * states
    sig = sigma_apex_from_v2(v2[None, :], stages[:, None], desc)
    sig_max = float(np.max(np.abs(sig)))
    tau_max = max(abs(cfg.tau_min), abs(cfg.tau_max))
    dev_max = max(abs(cfg.omega_min - cfg.omega_ref),
                  abs(cfg.omega_max - cfg.omega_ref))
    return float(stage_cost(sig_max, tau_max, cfg.omega_ref + dev_max,
                            cfg, cfg.stage_res))


def solve_dp(cfg: DPConfig) -> PolicyTable:
    """Backward induction over the stage grid with exhaustive control search.

    Successor states are quantized to the nearest velocity grid node; states
    pushed off the grid are clamped to the edge and charged a penalty of ten
    times the maximum running cost, making escape strictly dominated.  Ties
    are broken toward the lowest control-grid index.
    """
    stages = cfg.stages()
    states = cfg.states()
    omegas = cfg.omegas()
    taus = cfg.taus()
    desc = cfg.descriptor()
    n_states = len(states)
    n_points = len(stages)
    # flattened control grid, omega-major
    om_flat = np.repeat(omegas, len(taus))          # (C,)
    tau_flat = np.tile(taus, len(omegas))           # (C,)
    penalty = 10.0 * _max_stage_cost(cfg)

    cost = np.empty((n_points, n_states))
    pol_omega = np.empty((n_points - 1, n_states))
    pol_tau = np.empty((n_points - 1, n_states))
    cost[-1] = cfg.alpha * (states - nominal_velocity(cfg, stages[-1])) ** 2

    v2_states = (states * states)[:, None]          # (S, 1)
    for n in range(n_points - 2, -1, -1):
        x0 = stages[n]
        x1 = stages[n + 1]
        xm = x0 + 0.5 * cfg.stage_res
        v2_mid = advance_v2(v2_states, x0, xm, om_flat[None, :],
                            tau_flat[None, :], cfg)
        sig_mid = sigma_apex_from_v2(v2_mid, xm, desc)
        run = stage_cost(sig_mid, tau_flat[None, :], om_flat[None, :],
                         cfg, cfg.stage_res)
        v2_next = advance_v2(v2_states, x0, x1, om_flat[None, :],
                             tau_flat[None, :], cfg)
        vel_next = np.sqrt(np.maximum(v2_next, 0.0))
        idx = np.rint((vel_next - cfg.state_min) / cfg.state_res).astype(int)
        off_grid = (idx < 0) | (idx >= n_states) | (v2_next <= 0.0)
        idx = np.clip(idx, 0, n_states - 1)
        total = run + cfg.discount * cost[n + 1][idx]
        total = np.where(off_grid, total + penalty, total)
        best = np.argmin(total, axis=1)
        rows = np.arange(n_states)
        cost[n] = total[rows, best]
        pol_omega[n] = om_flat[best]
        pol_tau[n] = tau_flat[best]
    return PolicyTable(cfg, pol_omega, pol_tau, cost)


def saturate_control(sigma: float, epsilon: float, u_policy, u_epsilon, u_ref):
    """Boundary-layer control blend: raw policy outside, linear blend inside."""
    if epsilon <= 0.0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    mag = abs(sigma)
    if mag > epsilon:
        return tuple(u_policy)
    w = mag / epsilon
    return tuple(w * ue + (1.0 - w) * ur for ue, ur in zip(u_epsilon, u_ref))


def lyapunov_rate(state, sigma: float, tau_y: float, m: ManifoldDescriptor,
                  mass: float = 1.0, g: float = 9.81) -> float:
    """Time derivative of sigma^2/2 along the pendulum flow at reference omega."""
    return -2.0 * m.xdot_apex ** 2 * sigma * state.xdot * tau_y / (mass * g)


def max_tube_radius(epsilon: float, xdot_apex: float, mass: float, g: float,
                    x_trans: float, x0: float, tau_y: float) -> float:
    """Largest initial deviation recoverable by torque tau_y over [x0, x_trans]."""
    mu = 2.0 * math.sqrt(2.0) * xdot_apex * xdot_apex / (mass * g)
    return epsilon + math.sqrt(2.0) / 2.0 * mu * (x_trans - x0) * tau_y


@dataclass
class RecoverabilityMask:
    """Boolean stage-by-state grid marking membership in the recoverability bundle."""

    cfg: DPConfig
    epsilon: float
    cells: np.ndarray  # (n_stage_points, n_states) bool

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.cells))

    def contains(self, x: float, xdot: float) -> bool:
        return bool(self.cells[self.cfg.stage_index(x), self.cfg.state_index(xdot)])


@dataclass
class Rollout:
    """Closed-loop trace of one policy rollout across the stage grid."""

    x: np.ndarray
    xdot: np.ndarray
    sigma: np.ndarray
    omega: np.ndarray
    tau: np.ndarray


def rollout_policy(table: PolicyTable, x0: float, xdot0: float,
                   epsilon: float) -> Rollout:
    """Roll the saturated closed loop from (x0, xdot0) to the stage horizon."""
    cfg = table.cfg
    stages = cfg.stages()
    desc = cfg.descriptor()
    u_ref = (cfg.omega_ref, cfg.tau_ref)
    n = cfg.stage_index(x0)
    v2 = xdot0 * xdot0
    xs, vs, sigs, oms, tas = [stages[n]], [math.sqrt(v2)], [], [], []
    entered = False
    u_eps = u_ref
    for k in range(n, len(stages) - 1):
        x = stages[k]
        sig = float(sigma_apex_from_v2(v2, x, desc))
        u_pol = table.lookup(x, math.sqrt(max(v2, 0.0)))
        if not entered and abs(sig) <= epsilon:
            entered = True
            u_eps = u_pol
        omega, tau = saturate_control(sig, epsilon, u_pol, u_eps, u_ref) \
            if entered else u_pol
        v2 = float(advance_v2(v2, x, stages[k + 1], omega, tau, cfg))
        v2 = max(v2, 0.0)
        sigs.append(sig)
        oms.append(omega)
        tas.append(tau)
        xs.append(stages[k + 1])
        vs.append(math.sqrt(v2))
    sigs.append(float(sigma_apex_from_v2(v2, stages[-1], desc)))
    return Rollout(np.array(xs), np.array(vs), np.array(sigs),
                   np.array(oms), np.array(tas))


def estimate_recoverability(cfg: DPConfig, epsilon: float,
                            table: PolicyTable | None = None) -> RecoverabilityMask:
    """Mark every grid state whose closed-loop rollout ends inside the bundle.

    For each starting stage the whole velocity grid is propagated at once
    under the policy with boundary-layer saturation; a cell is recoverable
    iff |sigma| <= epsilon at the stage horizon.
    """
    if epsilon <= 0.0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if table is None:
        table = solve_dp(cfg)
    stages = cfg.stages()
    states = cfg.states()
    desc = cfg.descriptor()
    n_points = len(stages)
    n_states = len(states)
    cells = np.zeros((n_points, n_states), dtype=bool)
    for n0 in range(n_points):
        v2 = states * states
        entered = np.zeros(n_states, dtype=bool)
        om_eps = np.full(n_states, cfg.omega_ref)
        tau_eps = np.full(n_states, cfg.tau_ref)
        for k in range(n0, n_points - 1):
            x = stages[k]
            sig = sigma_apex_from_v2(v2, x, desc)
            vel = np.sqrt(np.maximum(v2, 0.0))
            idx = np.clip(np.rint((vel - cfg.state_min) / cfg.state_res).astype(int),
                          0, n_states - 1)
            om_pol = table.omega[k][idx]
            tau_pol = table.tau[k][idx]
            newly = ~entered & (np.abs(sig) <= epsilon)
            om_eps[newly] = om_pol[newly]
            tau_eps[newly] = tau_pol[newly]
            entered |= newly
            w = np.minimum(np.abs(sig) / epsilon, 1.0)
            om = np.where(entered & (np.abs(sig) <= epsilon),
                          w * om_eps + (1.0 - w) * cfg.omega_ref, om_pol)
            tau = np.where(entered & (np.abs(sig) <= epsilon),
                           w * tau_eps + (1.0 - w) * cfg.tau_ref, tau_pol)
            v2 = advance_v2(v2, x, stages[k + 1], om, tau, cfg)
            v2 = np.maximum(v2, 0.0)
        sig_end = sigma_apex_from_v2(v2, stages[-1], desc)
        cells[n0] = np.abs(sig_end) <= epsilon
    return RecoverabilityMask(cfg, epsilon, cells)


def replan_foot(x_trans: float, xdot_trans_rep: float, xdot_apex_next: float,
                omega: float) -> float:
    """Analytic next foot placement preserving the planned apex velocity.

    Takes the positive square root only; forward walking places the new foot
    ahead of the transition.
    """
    radicand = xdot_trans_rep * xdot_trans_rep - xdot_apex_next * xdot_apex_next
    if radicand < 0.0:
        raise InfeasibleReplanError(
            f"transition velocity {xdot_trans_rep:.4f} m/s below the next "
            f"apex target {xdot_apex_next:.4f} m/s")
    return x_trans + math.sqrt(radicand) / omega


def config_for_step(cfg: DPConfig, *, x_entry: float, x_trans: float,
                    x_foot: float, xdot_apex: float, omega_ref: float) -> DPConfig:
    """Specialize grid ranges and references of a base config to one step."""
    lo = math.floor(x_entry / cfg.stage_res) * cfg.stage_res
    hi = math.ceil(x_trans / cfg.stage_res) * cfg.stage_res
    return replace(cfg, stage_min=lo, stage_max=hi, x_foot=x_foot,
                   xdot_apex=xdot_apex, omega_ref=omega_ref,
                   omega_min=omega_ref + (cfg.omega_min - cfg.omega_ref),
                   omega_max=omega_ref + (cfg.omega_max - cfg.omega_ref))
