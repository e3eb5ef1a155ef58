"""Nominal plan generation over terrain: step manifolds, transitions, lateral feet.

A plan is a sequence of step manifolds, one per terrain step, each anchored
at its apex keyframe and sampled by forward/backward integration of the
torque-free pendulum.  Adjacent manifolds are joined at the crossing of
their squared-velocity curves; lateral foot placements are tuned so the
lateral velocity vanishes at each sagittal apex.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import (DegenerateTransitionError, GeometryError, NoTransitionError,
                     NonConvergenceError, ParameterError, PlanningInfeasibleError)
from .manifold import ManifoldDescriptor
from .pendulum import (GRAVITY, LateralState, PathSurface, StepParameters,
                       integrate_trajectory, omega_from_surface, rk4_step)


@dataclass(frozen=True)
class ApexKeyframe:
    """Desired apex sagittal velocity and CoM height above the foot."""

    xdot_apex: float
    z_apex: float

    def __post_init__(self):
        if not (self.z_apex > 0.0):
            raise ValueError(f"z_apex must be positive, got {self.z_apex}")


@dataclass(frozen=True)
class TerrainStep:
    """One terrain step: foot anchor, surface tilt, and optional CoM surface."""

    foot: tuple[float, float, float]
    tilt: float = 0.0
    surface: PathSurface | None = None


@dataclass(frozen=True)
class TerrainSpec:
    """Ordered terrain steps with strictly increasing foot x positions."""

    steps: tuple[TerrainStep, ...]

    def __post_init__(self):
        xs = [s.foot[0] for s in self.steps]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("terrain foot x positions must be strictly increasing")

    def __len__(self):
        return len(self.steps)


@dataclass
class StepManifold:
    """Sampled nominal phase curve of one step plus its fitted xdot^2(x) spline."""

    descriptor: ManifoldDescriptor
    params: StepParameters
    xs: np.ndarray
    xdots: np.ndarray
    _v2: CubicSpline = field(repr=False)
    _arc: np.ndarray = field(repr=False)

    @property
    def x_min(self) -> float:
        return float(self.xs[0])

    @property
    def x_max(self) -> float:
        return float(self.xs[-1])

    def v2_at(self, x):
        return self._v2(x)

    def xdot_at(self, x) -> float:
        return float(math.sqrt(max(float(self._v2(x)), 0.0)))

    def zeta_at(self, x) -> float:
        """Signed arc length from the apex in the (x, xdot/omega) plane."""
        return float(np.interp(x, self.xs, self._arc))


def _build_manifold(desc: ManifoldDescriptor, params: StepParameters,
                    x_lo: float, x_hi: float, dt: float) -> StepManifold:
    """Sample the torque-free phase curve from the apex out to an x window."""
    foot = params.foot[0]
    fwd_x = [foot]
    fwd_v = [desc.xdot_apex]
    pos, vel = foot, desc.xdot_apex
    cap = max(1000, int(20.0 * (x_hi - x_lo) / max(dt * abs(desc.xdot_apex), 1e-12)))
    k = 0
    while pos < x_hi and k < cap:
        pos, vel = rk4_step(pos, vel, foot, params.omega, 0.0, dt,
                            params.mass, params.gravity)
        fwd_x.append(pos)
        fwd_v.append(vel)
        k += 1
    bwd_x = []
    bwd_v = []
    pos, vel = foot, desc.xdot_apex
    k = 0
    while pos > x_lo and k < cap:
        pos, vel = rk4_step(pos, vel, foot, params.omega, 0.0, -dt,
                            params.mass, params.gravity)
        bwd_x.append(pos)
        bwd_v.append(vel)
        k += 1
    xs = np.array(bwd_x[::-1] + fwd_x)
    vs = np.array(bwd_v[::-1] + fwd_v)
    if np.any(np.diff(xs) <= 0.0):
        raise PlanningInfeasibleError("manifold samples are not monotone in x")
    spline = CubicSpline(xs, vs * vs)
    seg = np.hypot(np.diff(xs), np.diff(vs) / params.omega)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    apex_idx = len(bwd_x)
    arc = cum - cum[apex_idx]
    return StepManifold(desc, params, xs, vs, spline, arc)


def resolve_surface(step: TerrainStep, keyframe: ApexKeyframe) -> PathSurface:
    """Surface of a terrain step, built from tilt and apex height when missing."""
    if step.surface is not None:
        return step.surface
    a = math.tan(step.tilt)
    b = step.foot[2] + keyframe.z_apex - a * step.foot[0]
    return PathSurface(a, b)


def generate_nominal(terrain: TerrainSpec, keyframes, g: float = GRAVITY, *,
                     dt: float = 1e-3, window_margin: float = 0.3,
                     edge_window: float = 0.8,
                     tau_y_limits=(-3.0, 3.0)) -> list[StepManifold]:
    """Generate the nominal manifold of every step, anchored at its keyframe.

    One keyframe per terrain step; torque is identically zero.  Each manifold
    is sampled over an x window spanning past both neighbour feet so that
    adjacent manifolds overlap.
    """
    keyframes = list(keyframes)
    if len(keyframes) != len(terrain):
        raise ParameterError(
            f"{len(keyframes)} keyframes for {len(terrain)} terrain steps")
    feet = [s.foot[0] for s in terrain.steps]
    manifolds = []
    for q, (step, kf) in enumerate(zip(terrain.steps, keyframes)):
        surface = resolve_surface(step, kf)
        omega = omega_from_surface(surface, step.foot, g)
        params = StepParameters(omega=omega, foot=tuple(step.foot), surface=surface,
                                gravity=g, tau_y_limits=tuple(tau_y_limits))
        desc = ManifoldDescriptor(kf.xdot_apex, step.foot[0], omega)
        x_lo = (feet[q - 1] if q > 0 else feet[q] - edge_window) - window_margin
        x_hi = (feet[q + 1] if q + 1 < len(feet) else feet[q] + edge_window) + window_margin
        manifolds.append(_build_manifold(desc, params, x_lo, x_hi, dt))
    for q in range(len(manifolds) - 1):
        if manifolds[q].x_max <= manifolds[q + 1].x_min:
            raise PlanningInfeasibleError(
                f"manifolds {q} and {q + 1} do not overlap in x")
    return manifolds


@dataclass(frozen=True)
class TransitionPoint:
    """Crossing of two adjacent step manifolds in the phase plane."""

    x_trans: float
    xdot_trans: float
    zeta_trans: float


def find_transition(mq: StepManifold, mq1: StepManifold) -> TransitionPoint:
    """Locate the forward-walking crossing of two fitted xdot^2(x) curves."""
    lo = max(mq.x_min, mq1.x_min)
    hi = min(mq.x_max, mq1.x_max)
    if hi <= lo:
        raise NoTransitionError("manifolds do not overlap in x")
    grid = np.linspace(lo, hi, 512)
    f = mq.v2_at(grid) - mq1.v2_at(grid)
    scale = max(1.0, float(np.max(np.abs(mq.v2_at(grid)))))
    if float(np.max(np.abs(f))) <= 1e-12 * scale:
        raise DegenerateTransitionError("adjacent manifolds coincide")

    def diff(x):
        return float(mq.v2_at(x) - mq1.v2_at(x))

    roots = []
    for i in range(len(grid) - 1):
        fa, fb = f[i], f[i + 1]
        if fa == 0.0:
            roots.append(float(grid[i]))
        elif fa * fb < 0.0:
            roots.append(float(brentq(diff, grid[i], grid[i + 1],
                                      xtol=1e-12, rtol=8.9e-16)))
    if f[-1] == 0.0:
        roots.append(float(grid[-1]))
    for x_star in sorted(roots):
        v2 = float(mq.v2_at(x_star))
        if v2 > 0.0:
            return TransitionPoint(x_star, math.sqrt(v2), mq.zeta_at(x_star))
    raise NoTransitionError("no crossing with positive velocity in the overlap")


def lateral_foot_search(y_init: float, ydot_init: float, p: StepParameters,
                        y_foot_bounds: tuple[float, float], n_max: int = 20,
                        ydot_tol: float = 1e-4, *, t_apex: float,
                        dt: float = 1e-3) -> float:
    """Newton-Raphson search for the lateral foot position nulling apex velocity.

    Integrates the lateral pendulum to the sagittal-apex instant `t_apex` and
    drives the terminal lateral velocity below `ydot_tol` by the secant
    update.  Out-of-bounds iterates are clamped with a warning.
    """
    if n_max < 1:
        raise ParameterError(f"n_max must be >= 1, got {n_max}")
    lo, hi = y_foot_bounds
    if not lo < hi:
        raise ParameterError(f"empty foot placement bounds {y_foot_bounds}")
    if t_apex <= 0.0:
        raise ParameterError(f"t_apex must be positive, got {t_apex}")

    n_full = int(t_apex / dt)
    dt_last = t_apex - n_full * dt

    def apex_velocity(y_foot: float) -> float:
        pos, vel = y_init, ydot_init
        for _ in range(n_full):
            pos, vel = rk4_step(pos, vel, y_foot, p.omega, 0.0, dt,
                                p.mass, p.gravity)
        if dt_last > 0.0:
            pos, vel = rk4_step(pos, vel, y_foot, p.omega, 0.0, dt_last,
                                p.mass, p.gravity)
        return vel

    def clamp(y_foot: float) -> float:
        if y_foot < lo or y_foot > hi:
            clamped = min(max(y_foot, lo), hi)
            warnings.warn(
                f"lateral foot placement {y_foot:.4f} clamped to "
                f"[{lo:.4f}, {hi:.4f}]", RuntimeWarning, stacklevel=3)
            return clamped
        return y_foot

    y_foot = clamp(p.foot[1])
    vel = apex_velocity(y_foot)
    if abs(vel) <= ydot_tol:
        return y_foot
    # probe step to seed the secant slope
    probe = y_foot + 0.01 if y_foot + 0.01 <= hi else y_foot - 0.01
    vel_probe = apex_velocity(probe)
    slope = (vel_probe - vel) / (probe - y_foot)
    y_foot, vel = probe, vel_probe
    n = 1
    while n < n_max and abs(vel) > ydot_tol:
        if slope == 0.0:
            break
        y_next = clamp(y_foot - vel / slope)
        vel_next = apex_velocity(y_next)
        if y_next != y_foot:
            slope = (vel_next - vel) / (y_next - y_foot)
        y_foot, vel = y_next, vel_next
        n += 1
    if abs(vel) > ydot_tol:
        raise NonConvergenceError(
            f"lateral search stalled at |ydot_apex|={abs(vel):.3e} "
            f"after {n} iterations", best=y_foot, residual=vel)
    return y_foot


@dataclass(frozen=True)
class QuinticSegment:
    """Fifth-order polynomial segment with prescribed endpoint pos/vel/acc."""

    coeffs: np.ndarray  # shape (6,) or (6, n_coords), ascending powers
    duration: float

    def _powers(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.ones_like(t), t, t**2, t**3, t**4, t**5])

    def position(self, t):
        return np.tensordot(self._powers(t), self.coeffs, axes=(0, 0))

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        basis = np.stack([np.zeros_like(t), np.ones_like(t), 2 * t,
                          3 * t**2, 4 * t**3, 5 * t**4])
        return np.tensordot(basis, self.coeffs, axes=(0, 0))

    def acceleration(self, t):
        t = np.asarray(t, dtype=float)
        basis = np.stack([np.zeros_like(t), np.zeros_like(t),
                          2 * np.ones_like(t), 6 * t, 12 * t**2, 20 * t**3])
        return np.tensordot(basis, self.coeffs, axes=(0, 0))


def fit_multicontact(boundary, duration_fraction: float = 0.25,
                     step_duration: float = 1.0) -> QuinticSegment:
    """Fit the unique quintic meeting entry/exit (pos, vel, acc) boundary values.

    `boundary` is ((p0, v0, a0), (p1, v1, a1)); entries may be scalars or
    equal-length arrays for multi-coordinate fits.  The segment occupies
    `duration_fraction` of `step_duration`.
    """
    if not 0.0 < duration_fraction < 1.0:
        raise ParameterError(
            f"duration_fraction must be in (0, 1), got {duration_fraction}")
    if step_duration <= 0.0:
        raise ParameterError(f"step_duration must be positive, got {step_duration}")
    big_t = duration_fraction * step_duration
    (p0, v0, a0), (p1, v1, a1) = boundary
    rhs = np.stack([np.atleast_1d(np.asarray(v, dtype=float))
                    for v in (p0, v0, a0, p1, v1, a1)])
    t = big_t
    mat = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, t, t**2, t**3, t**4, t**5],
        [0, 1, 2 * t, 3 * t**2, 4 * t**3, 5 * t**4],
        [0, 0, 2, 6 * t, 12 * t**2, 20 * t**3],
    ], dtype=float)
    coeffs = np.linalg.solve(mat, rhs)
    if coeffs.shape[1] == 1:
        coeffs = coeffs[:, 0]
    return QuinticSegment(coeffs, big_t)


def generate_terrain(n_steps: int, dh_min: float, dh_max: float, tilt: float,
                     seed: int, *, step_length: float = 0.5,
                     apex_height: float = 1.0, start=(0.0, 0.0, 0.0),
                     lateral_offset: float = 0.1) -> TerrainSpec:
    """Random rough terrain with height deltas drawn uniformly from
    (-dh_max, -dh_min) U (dh_min, dh_max); deterministic for a fixed seed."""
    if not (0.0 < dh_min < dh_max):
        raise ParameterError(
            f"need 0 < dh_min < dh_max, got ({dh_min}, {dh_max})")
    if n_steps < 1:
        raise ParameterError(f"n_steps must be >= 1, got {n_steps}")
    if step_length <= 0.0:
        raise ParameterError(f"step_length must be positive, got {step_length}")
    rng = np.random.default_rng(seed)
    a = math.tan(tilt)
    x0, y0, z0 = start
    steps = []
    height = z0
    for k in range(n_steps):
        if k > 0:
            sign = 1.0 if rng.random() < 0.5 else -1.0
            height += sign * rng.uniform(dh_min, dh_max)
        foot_x = x0 + k * step_length
        foot_y = y0 + (lateral_offset if k % 2 == 0 else -lateral_offset)
        surface = PathSurface(a, height + apex_height - a * foot_x)
        steps.append(TerrainStep((foot_x, foot_y, height), tilt, surface))
    return TerrainSpec(tuple(steps))


def time_between(xa: float, va: float, xb: float, foot: float, omega: float) -> float:
    """Torque-free travel time between two positions on the same phase curve.

    Uses the exponential invariant omega*(x - foot) + xdot, valid while the
    trajectory does not reverse between the two points.
    """
    vb2 = va * va + omega * omega * ((xb - foot) ** 2 - (xa - foot) ** 2)
    if vb2 < 0.0:
        raise GeometryError("target position unreachable on this phase curve")
    vb = math.sqrt(vb2) if va >= 0.0 else -math.sqrt(vb2)
    num = omega * (xb - foot) + vb
    den = omega * (xa - foot) + va
    if num * den <= 0.0:
        raise GeometryError("trajectory reverses between the two positions")
    return math.log(num / den) / omega


def time_to_apex(x: float, xdot: float, foot: float, omega: float) -> float:
    """Time for the torque-free pendulum to reach its sagittal apex x = foot."""
    rel = x - foot
    if xdot == 0.0:
        raise GeometryError("zero velocity never reaches the apex")
    arg = -omega * rel / xdot
    if abs(arg) >= 1.0:
        raise GeometryError("apex unreachable: state below the asymptote")
    return math.atanh(arg) / omega


def progression_map(apex_q: ApexKeyframe, controls, current: StepParameters,
                    nxt: StepParameters, next_keyframe: ApexKeyframe,
                    *, dt: float = 1e-3, window_margin: float = 0.3) -> ApexKeyframe:
    """Simulate one full step through the transition; return the realized next apex.

    `controls` is the torque schedule of the next step's single-contact phase
    (None for the nominal plan).  Propagates transition-solver errors.
    """
    desc_q = ManifoldDescriptor(apex_q.xdot_apex, current.foot[0], current.omega)
    desc_n = ManifoldDescriptor(next_keyframe.xdot_apex, nxt.foot[0], nxt.omega)
    span = abs(nxt.foot[0] - current.foot[0]) + window_margin
    mq = _build_manifold(desc_q, current, current.foot[0] - span,
                         current.foot[0] + span, dt)
    mn = _build_manifold(desc_n, nxt, nxt.foot[0] - span, nxt.foot[0] + span, dt)
    tp = find_transition(mq, mn)

    # ride the next step's field from the transition to its apex
    pos, vel = tp.x_trans, tp.xdot_trans
    schedule = controls if controls is not None else (lambda k, p_, v_: 0.0)
    if not callable(schedule):
        value = float(schedule)
        schedule = lambda k, p_, v_: value
    foot_n = nxt.foot[0]
    k = 0
    cap = int(60.0 / dt)
    prev = (pos, vel)
    while pos < foot_n and k < cap:
        prev = (pos, vel)
        tau = float(schedule(k, pos, vel))
        pos, vel = rk4_step(pos, vel, foot_n, nxt.omega, tau, dt,
                            nxt.mass, nxt.gravity)
        k += 1
    if pos < foot_n:
        raise PlanningInfeasibleError("next apex not reached within the horizon")
    # refine the apex crossing with fine substeps from the bracket start
    pos, vel = prev
    fine = dt / 64.0
    while pos < foot_n:
        tau = float(schedule(k, pos, vel))
        pos, vel = rk4_step(pos, vel, foot_n, nxt.omega, tau, fine,
                            nxt.mass, nxt.gravity)
    z_apex_next = nxt.surface.a * foot_n + nxt.surface.b - nxt.foot[2]
    return ApexKeyframe(vel, z_apex_next)


def keyframes_for_terrain(terrain: TerrainSpec, base_velocity: float = 0.6,
                          height_gain: float = 0.2, v_min: float = 0.4,
                          v_max: float = 0.8, apex_height: float = 1.0) -> list[ApexKeyframe]:
    """Apex keyframes from the terrain height profile: slower uphill, faster down."""
    kfs = []
    prev_h = terrain.steps[0].foot[2]
    for step in terrain.steps:
        dh = step.foot[2] - prev_h
        vel = min(max(base_velocity - height_gain * dh, v_min), v_max)
        if step.surface is not None:
            z_apex = (step.surface.a * step.foot[0] + step.surface.b
                      - step.foot[2])
        else:
            z_apex = apex_height
        kfs.append(ApexKeyframe(vel, z_apex))
        prev_h = step.foot[2]
    return kfs
