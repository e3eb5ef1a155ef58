"""Hybrid walking automaton: modes, guards, transitions, and the run loop.

A run integrates one step's vector field until a guard fires, applies the
transition, and continues with the next step's field.  Disturbances are
velocity impulses injected mid-step; recovery uses a policy table plus
boundary-layer saturation, with analytic foot re-planning when the disturbed
state falls outside the recoverability bundle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from .controller import PolicyTable, RecoverabilityMask, replan_foot, saturate_control
from .errors import (AutomatonError, GeometryError, InfeasibleReplanError,
                     NonConvergenceError, ParameterError)
from .manifold import ManifoldDescriptor, sigma_apex
from .pendulum import (LateralState, SagittalState, closed_form_state,
                       orbital_energy, rk4_step, surface_height)
from .planner import (StepManifold, TransitionPoint, _build_manifold,
                      find_transition, fit_multicontact, lateral_foot_search,
                      time_between, time_to_apex)


class DiscreteMode(Enum):
    LEFT_SUPPORT = "left"
    RIGHT_SUPPORT = "right"
    DUAL_SUPPORT = "dual"


_SINGLE = (DiscreteMode.LEFT_SUPPORT, DiscreteMode.RIGHT_SUPPORT)


def _other_single(mode: DiscreteMode) -> DiscreteMode:
    if mode is DiscreteMode.LEFT_SUPPORT:
        return DiscreteMode.RIGHT_SUPPORT
    if mode is DiscreteMode.RIGHT_SUPPORT:
        return DiscreteMode.LEFT_SUPPORT
    raise AutomatonError("dual support has no unique successor")


class EventClass(Enum):
    AUTONOMOUS = "autonomous"
    CONTROLLED = "controlled"
    TIMED = "timed"
    DISTURBED = "disturbed"


class EventKind(Enum):
    SWITCHING = "switching"
    JUMP = "jump"


@dataclass(frozen=True)
class TransitionEvent:
    """One discrete event: class/kind pair plus its payload.

    Switching payloads name the target mode (the vector field is replaced by
    the step parameters handed to `apply_transition`); jump payloads are
    velocity deltas (dxdot, dydot).
    """

    klass: EventClass
    kind: EventKind
    payload: object = None


@dataclass(frozen=True)
class HybridState:
    """Continuous state of the automaton plus progression and discrete mode."""

    zeta: float
    mode: DiscreteMode
    sagittal: SagittalState
    lateral: LateralState


@dataclass(frozen=True)
class PositionGuard:
    x_g: float

    def level(self, s: HybridState) -> float:
        return s.sagittal.x - self.x_g


@dataclass(frozen=True)
class VelocityGuard:
    xdot_g: float

    def level(self, s: HybridState) -> float:
        return s.sagittal.xdot - self.xdot_g


@dataclass(frozen=True)
class ProgressionGuard:
    zeta_g: float

    def level(self, s: HybridState) -> float:
        return s.zeta - self.zeta_g


@dataclass(frozen=True)
class ManifoldGuard:
    """Level set of the next step's tangent manifold, typically at -epsilon."""

    descriptor: ManifoldDescriptor
    level_value: float

    def level(self, s: HybridState) -> float:
        return sigma_apex(s.sagittal, self.descriptor) - self.level_value


def guard_crossed(g, prev: HybridState, curr: HybridState) -> tuple[bool, float]:
    """Sign-change test of the guard level between two consecutive samples.

    Returns (crossed, fraction) with the crossing located by linear
    interpolation between the samples.
    """
    f0 = g.level(prev)
    f1 = g.level(curr)
    if f0 == 0.0 or f0 * f1 > 0.0 or f1 == f0:
        return False, 0.0
    return True, f0 / (f0 - f1)


def inject_disturbance(s: HybridState, impulse: tuple[float, float]) -> HybridState:
    """Velocity impulse (dxdot, dydot); positions are untouched."""
    dxd, dyd = impulse
    return replace(s,
                   sagittal=SagittalState(s.sagittal.x, s.sagittal.xdot + dxd),
                   lateral=LateralState(s.lateral.y, s.lateral.ydot + dyd))


class DisturbancePattern(Enum):
    A1 = "a1"
    A2 = "a2"
    A3 = "a3"
    A4 = "a4"


def classify_disturbance(post_state: SagittalState, m: ManifoldDescriptor,
                         m_next: ManifoldDescriptor | None = None) -> DisturbancePattern:
    """Classify a velocity impulse from the post-disturbance state.

    Assumes the pre-disturbance state sat on or near the nominal manifold of
    `m` with positive velocity, so the impulse sign equals the sign of the
    post-state deviation.  Positive impulses split on whether the orbital
    energy relative to the upcoming saddle (`m_next`) turned non-negative,
    meaning the state now clears the next asymptote; negative impulses split
    on whether the motion keeps its direction.
    """
    sig = sigma_apex(post_state, m)
    if sig >= 0.0:
        if m_next is not None:
            energy = orbital_energy(post_state.x, post_state.xdot,
                                    m_next.x_foot, m_next.omega)
            if energy >= 0.0:
                return DisturbancePattern.A2
        return DisturbancePattern.A1
    if post_state.xdot > 0.0:
        return DisturbancePattern.A3
    return DisturbancePattern.A4


def _legal_edge(a: DiscreteMode, b: DiscreteMode, allow_instantaneous: bool) -> bool:
    if a in _SINGLE and b is DiscreteMode.DUAL_SUPPORT:
        return True
    if a is DiscreteMode.DUAL_SUPPORT and b in _SINGLE:
        return True
    if a in _SINGLE and b in _SINGLE and a is not b:
        return allow_instantaneous
    return False


def apply_transition(e: TransitionEvent, s: HybridState, nxt,
                     allow_instantaneous: bool = True):
    """Apply one discrete event; returns the new hybrid state and parameters.

    Switching events keep the continuous state and hand over the next step's
    parameters; jump events modify the continuous state in place.
    """
    if e.kind is EventKind.SWITCHING:
        target = e.payload
        if not isinstance(target, DiscreteMode):
            raise AutomatonError("switching events need a target mode payload")
        if not _legal_edge(s.mode, target, allow_instantaneous):
            raise AutomatonError(f"illegal mode transition {s.mode} -> {target}")
        return replace(s, mode=target), nxt
    dxd, dyd = e.payload if e.payload is not None else (0.0, 0.0)
    return inject_disturbance(s, (dxd, dyd)), nxt


@dataclass(frozen=True)
class Disturbance:
    """Scheduled velocity impulse: fires once per run at an x or zeta trigger."""

    step: int
    dxdot: float = 0.0
    dydot: float = 0.0
    at_x: float | None = None
    at_zeta: float | None = None

    def __post_init__(self):
        if (self.at_x is None) == (self.at_zeta is None):
            raise ParameterError("specify exactly one of at_x / at_zeta")


@dataclass
class StepPolicy:
    """Recovery assets for one step: policy table plus optional bundle mask."""

    table: PolicyTable
    mask: RecoverabilityMask | None = None


@dataclass
class RecoveryHooks:
    """Per-step recovery assets consulted when a disturbance fires."""

    policies: dict[int, StepPolicy] = field(default_factory=dict)


@dataclass(frozen=True)
class AutomatonConfig:
    dt: float = 1e-3
    guard_kind: str = "manifold"  # manifold | position | velocity | progression
    epsilon: float = 1e-3
    multi_contact: bool = False
    duration_fraction: float = 0.25
    initial_mode: DiscreteMode = DiscreteMode.LEFT_SUPPORT
    y_init: float = 0.0
    ydot_init: float = 0.0
    lateral_search_width: float = 0.35
    max_step_samples: int = 400_000

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.guard_kind not in ("manifold", "position", "velocity", "progression"):
            raise ParameterError(f"unknown guard kind {self.guard_kind!r}")
        if self.epsilon <= 0.0:
            raise ParameterError("epsilon must be positive")


@dataclass
class TraceSample:
    t: float
    zeta: float
    mode: DiscreteMode
    x: float
    xd: float
    y: float
    yd: float
    z: float
    sigma: float
    omega: float
    tau_y: float
    event: str = ""


@dataclass
class TraceEvent:
    index: int              # sample index the event is anchored to
    step: int
    event: TransitionEvent
    tag: str
    fraction: float = 0.0
    level_before: float = 0.0
    level_after: float = 0.0


@dataclass
class HybridTrace:
    samples: list[TraceSample] = field(default_factory=list)
    events: list[TraceEvent] = field(default_factory=list)
    error: str | None = None

    def step_boundaries(self) -> list[TraceEvent]:
        """One record per executed step boundary (a dual phase counts once)."""
        return [e for e in self.events if e.tag in ("switch", "dual_in")]


class _Runner:
    """Mutable state of one automaton run."""

    def __init__(self, plan, config: AutomatonConfig, disturbances, hooks):
        self.steps: list[StepManifold] = list(plan)
        if not self.steps:
            raise ParameterError("plan must contain at least one step")
        n = len(self.steps)
        self.transitions: list[TransitionPoint | None] = [
            find_transition(self.steps[q], self.steps[q + 1]) for q in range(n - 1)
        ] + [None]
        self.by_step: dict[int, list[Disturbance]] = {}
        for d in disturbances:
            if not 0 <= d.step < n:
                raise ParameterError(f"disturbance step {d.step} outside plan")
            self.by_step.setdefault(d.step, []).append(d)
        self.config = config
        self.hooks = hooks
        self.trace = HybridTrace()
        self.mode = config.initial_mode
        self.x = self.steps[0].descriptor.x_foot
        self.v = self.steps[0].descriptor.xdot_apex
        self.y = config.y_init
        self.yd = config.ydot_init
        self.t = 0.0
        self.zeta = 0.0

    def hybrid(self) -> HybridState:
        return HybridState(self.zeta, self.mode,
                           SagittalState(self.x, self.v),
                           LateralState(self.y, self.yd))

    def record(self, sigma, omega_u, tau_u, surface, tag="") -> TraceSample:
        s = TraceSample(self.t, self.zeta, self.mode, self.x, self.v,
                        self.y, self.yd, surface_height(surface, self.x),
                        sigma, omega_u, tau_u, tag)
        self.trace.samples.append(s)
        return s

    def fail(self, message: str) -> HybridTrace:
        self.trace.error = message
        return self.trace


def _make_guard(kind: str, tp: TransitionPoint, next_desc: ManifoldDescriptor,
                epsilon: float, zeta_g: float):
    if kind == "manifold":
        return ManifoldGuard(next_desc, -epsilon)
    if kind == "position":
        return PositionGuard(tp.x_trans)
    if kind == "velocity":
        return VelocityGuard(tp.xdot_trans)
    if kind == "progression":
        return ProgressionGuard(zeta_g)
    raise AutomatonError(f"unknown guard kind {kind!r}")


def run_plan(plan, config: AutomatonConfig, disturbances=(),
             hooks: RecoveryHooks | None = None) -> HybridTrace:
    """Execute a multi-step plan under the hybrid automaton.

    The loop integrates the current field, evaluates the step's deviation
    every sample, injects scheduled disturbances, engages the recovery
    policy, re-plans the next feet when the disturbed state falls outside
    the recoverability bundle, and advances steps at guard crossings.  On
    failure the trace collected so far is returned with an error record.
    """
    r = _Runner(plan, config, disturbances, hooks)
    n_steps = len(r.steps)
    for q in range(n_steps):
        done = _run_step(r, q)
        if r.trace.error is not None or done:
            break
    return r.trace


def _run_step(r: _Runner, q: int) -> bool:
    """Integrate step q until its guard fires; returns True when the run ends."""
    config = r.config
    dt = config.dt
    m = r.steps[q]
    params = m.params
    desc = m.descriptor
    last_step = q == len(r.steps) - 1
    tp = r.transitions[q]
    next_desc = r.steps[q + 1].descriptor if not last_step else None
    if last_step:
        guard = PositionGuard(desc.x_foot)
    else:
        zeta_g = r.zeta + m.zeta_at(tp.x_trans) - m.zeta_at(r.x)
        guard = _make_guard(config.guard_kind, tp, next_desc, config.epsilon, zeta_g)

    pending = list(r.by_step.get(q, []))
    dp_ctx: StepPolicy | None = None
    entered = False
    u_eps = (params.omega, 0.0)
    replan_pending = False
    sig = sigma_apex(SagittalState(r.x, r.v), desc)
    if q == 0:
        r.record(sig, params.omega, 0.0, params.surface)
        if last_step and r.x >= desc.x_foot:
            r.trace.samples[-1].event = "end"
            return True

    for _ in range(config.max_step_samples):
        # scheduled disturbances trigger on the current state
        for d in list(pending):
            hit = (d.at_x is not None and r.x >= d.at_x) or \
                  (d.at_zeta is not None and r.zeta >= d.at_zeta)
            if not hit:
                continue
            pending.remove(d)
            ev = TransitionEvent(EventClass.DISTURBED, EventKind.JUMP,
                                 (d.dxdot, d.dydot))
            state, _ = apply_transition(ev, r.hybrid(), params)
            r.v = state.sagittal.xdot
            r.yd = state.lateral.ydot
            sig = sigma_apex(SagittalState(r.x, r.v), desc)
            pattern = classify_disturbance(SagittalState(r.x, r.v), desc, next_desc)
            last = r.trace.samples[-1]
            last.event = "disturb"
            last.xd = r.v
            last.yd = r.yd
            last.sigma = sig
            r.trace.events.append(TraceEvent(len(r.trace.samples) - 1, q, ev,
                                             "disturb:" + pattern.value))
            if r.hooks is not None and q in r.hooks.policies:
                dp_ctx = r.hooks.policies[q]
                entered = False
                unrecoverable = (abs(sig) > config.epsilon
                                 and dp_ctx.mask is not None
                                 and not dp_ctx.mask.contains(r.x, r.v))
                if unrecoverable and not last_step:
                    replan_pending = True
                    guard = PositionGuard(tp.x_trans)

        # control applied over the coming sample interval
        if dp_ctx is not None:
            u_pol = dp_ctx.table.lookup(r.x, r.v)
            if not entered and abs(sig) <= config.epsilon:
                entered = True
                u_eps = u_pol
            if entered:
                omega_u, tau_u = saturate_control(sig, config.epsilon, u_pol,
                                                  u_eps, (params.omega, 0.0))
            else:
                omega_u, tau_u = u_pol
            lo, hi = params.tau_y_limits
            tau_u = min(max(tau_u, lo), hi)
        else:
            omega_u, tau_u = params.omega, 0.0
        cur = r.trace.samples[-1]
        cur.omega = omega_u
        cur.tau_y = tau_u
        cur.sigma = sig

        x_new, v_new = rk4_step(r.x, r.v, params.foot[0], omega_u, tau_u, dt,
                                params.mass, params.gravity)
        y_new, yd_new = rk4_step(r.y, r.yd, params.foot[1], params.omega, 0.0,
                                 dt, params.mass, params.gravity)
        if not all(map(math.isfinite, (x_new, v_new, y_new, yd_new))):
            r.fail(f"divergence in step {q} at t={r.t:.6f}")
            return True
        zeta_new = r.zeta + math.hypot(x_new - r.x, (v_new - r.v) / params.omega)
        prev_hs = r.hybrid()
        curr_hs = HybridState(zeta_new, r.mode, SagittalState(x_new, v_new),
                              LateralState(y_new, yd_new))
        crossed, frac = guard_crossed(guard, prev_hs, curr_hs)
        if not crossed:
            r.x, r.v, r.y, r.yd, r.zeta = x_new, v_new, y_new, yd_new, zeta_new
            r.t += dt
            sig = sigma_apex(SagittalState(r.x, r.v), desc)
            r.record(sig, omega_u, tau_u, params.surface)
            continue

        # land on the interpolated crossing state
        level_before = guard.level(prev_hs)
        level_after = guard.level(curr_hs)
        r.x += frac * (x_new - r.x)
        r.v += frac * (v_new - r.v)
        r.y += frac * (y_new - r.y)
        r.yd += frac * (yd_new - r.yd)
        r.zeta += frac * (zeta_new - r.zeta)
        r.t += frac * dt
        sig = sigma_apex(SagittalState(r.x, r.v), desc)

        if last_step:
            r.record(sig, omega_u, tau_u, params.surface, "end")
            return True

        tag = "switch"
        if replan_pending:
            try:
                _replan_next_step(r, q)
            except (InfeasibleReplanError, GeometryError) as exc:
                r.record(sig, omega_u, tau_u, params.surface, "replan_failed")
                r.fail(f"foot re-planning failed in step {q}: {exc}")
                return True
            ev = TransitionEvent(EventClass.CONTROLLED, EventKind.SWITCHING,
                                 r.steps[q + 1].params)
            r.record(sig, omega_u, tau_u, params.surface, "replan")
            r.trace.events.append(TraceEvent(len(r.trace.samples) - 1, q, ev,
                                             "replan", frac,
                                             level_before, level_after))
            tag = "replan+switch"

        next_params = r.steps[q + 1].params
        if config.multi_contact:
            _dual_phase(r, q, params, next_params, frac,
                        level_before, level_after)
            if r.trace.error is not None:
                return True
        else:
            target = _other_single(r.mode)
            klass = EventClass.TIMED if isinstance(guard, ProgressionGuard) \
                else EventClass.AUTONOMOUS
            ev = TransitionEvent(klass, EventKind.SWITCHING, target)
            state, _ = apply_transition(ev, r.hybrid(), next_params,
                                        allow_instantaneous=True)
            r.mode = state.mode
            r.record(sig, omega_u, tau_u, params.surface, tag)
            r.trace.events.append(TraceEvent(len(r.trace.samples) - 1, q, ev,
                                             "switch", frac,
                                             level_before, level_after))
        return False

    r.fail(f"step {q} exceeded max_step_samples without a guard crossing")
    return True


def _replan_next_step(r: _Runner, q: int):
    """Rebuild step q+1 around the analytic foot placement for the realized
    transition velocity; the lateral foot is re-searched to null apex drift."""
    nxt = r.steps[q + 1]
    target_v = nxt.descriptor.xdot_apex
    omega = nxt.params.omega
    new_x = replan_foot(r.x, r.v, target_v, omega)
    t_apex = time_to_apex(r.x, r.v, new_x, omega)
    width = r.config.lateral_search_width
    old_y = nxt.params.foot[1]
    if old_y >= r.y:
        bounds = (r.y + 0.02, r.y + width)
    else:
        bounds = (r.y - width, r.y - 0.02)
    probe = replace(nxt.params, foot=(new_x, old_y, nxt.params.foot[2]))
    try:
        new_y = lateral_foot_search(r.y, r.yd, probe, bounds,
                                    t_apex=t_apex, dt=r.config.dt)
    except NonConvergenceError as exc:
        new_y = exc.best if exc.best is not None else old_y
    new_params = replace(nxt.params, foot=(new_x, new_y, nxt.params.foot[2]))
    desc = ManifoldDescriptor(target_v, new_x, omega)
    span = abs(new_x - r.steps[q].params.foot[0]) + 0.4
    new_manifold = _build_manifold(desc, new_params, new_x - span, new_x + span,
                                   r.config.dt)
    r.steps[q + 1] = new_manifold
    if q + 2 < len(r.steps):
        r.transitions[q + 1] = find_transition(new_manifold, r.steps[q + 2])


def _dual_phase(r: _Runner, q: int, params, next_params, frac,
                level_before, level_after):
    """Bridge two single-contact phases with a quintic dual-support segment.

    The exit state is the point the next step's field would reach from the
    crossing after the dual-support duration, so position, velocity, and
    acceleration are continuous at both junctions.
    """
    config = r.config
    nxt = r.steps[q + 1]
    tp_next = r.transitions[q + 1]
    exit_target = tp_next.x_trans if tp_next is not None else nxt.descriptor.x_foot
    try:
        step_duration = time_between(r.x, max(r.v, 1e-6), exit_target,
                                     next_params.foot[0], next_params.omega)
    except GeometryError:
        step_duration = 0.8
    step_duration = max(step_duration, 4.0 * config.dt / config.duration_fraction)

    entry_acc = params.omega ** 2 * (r.x - params.foot[0])
    exit_s = closed_form_state(r.x, r.v, next_params.foot[0], next_params.omega,
                               config.duration_fraction * step_duration)
    exit_acc = next_params.omega ** 2 * (exit_s.x - next_params.foot[0])
    qx = fit_multicontact(((r.x, r.v, entry_acc),
                           (exit_s.x, exit_s.xdot, exit_acc)),
                          config.duration_fraction, step_duration)
    lat_entry_acc = params.omega ** 2 * (r.y - params.foot[1])
    lat_exit = closed_form_state(r.y, r.yd, next_params.foot[1],
                                 next_params.omega, qx.duration)
    lat_exit_acc = next_params.omega ** 2 * (lat_exit.x - next_params.foot[1])
    qy = fit_multicontact(((r.y, r.yd, lat_entry_acc),
                           (lat_exit.x, lat_exit.xdot, lat_exit_acc)),
                          config.duration_fraction, step_duration)

    prior_single = r.mode
    ev_in = TransitionEvent(EventClass.AUTONOMOUS, EventKind.SWITCHING,
                            DiscreteMode.DUAL_SUPPORT)
    state, _ = apply_transition(ev_in, r.hybrid(), next_params,
                                allow_instantaneous=False)
    r.mode = state.mode
    next_desc = nxt.descriptor
    sig = sigma_apex(SagittalState(r.x, r.v), next_desc)
    r.record(sig, next_params.omega, 0.0, next_params.surface, "dual_in")
    r.trace.events.append(TraceEvent(len(r.trace.samples) - 1, q, ev_in,
                                     "dual_in", frac, level_before, level_after))

    n_sub = max(1, int(round(qx.duration / config.dt)))
    for j in range(1, n_sub + 1):
        tl = qx.duration * j / n_sub
        x_n = float(qx.position(tl))
        v_n = float(qx.velocity(tl))
        y_n = float(qy.position(tl))
        yd_n = float(qy.velocity(tl))
        r.zeta += math.hypot(x_n - r.x, (v_n - r.v) / next_params.omega)
        r.t += qx.duration / n_sub
        r.x, r.v, r.y, r.yd = x_n, v_n, y_n, yd_n
        sig = sigma_apex(SagittalState(r.x, r.v), next_desc)
        r.record(sig, next_params.omega, 0.0, next_params.surface)

    ev_out = TransitionEvent(EventClass.AUTONOMOUS, EventKind.SWITCHING,
                             _other_single(prior_single))
    state, _ = apply_transition(ev_out, r.hybrid(), next_params,
                                allow_instantaneous=False)
    r.mode = state.mode
    r.trace.samples[-1].event = "dual_out"
    r.trace.samples[-1].mode = r.mode
    r.trace.events.append(TraceEvent(len(r.trace.samples) - 1, q, ev_out,
                                     "dual_out"))
