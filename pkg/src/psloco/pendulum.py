"""Prismatic inverted pendulum dynamics, closed-form solutions, and terrain surfaces.

Both the sagittal and the lateral plane share the same second-order vector
field: the CoM accelerates away from the stance foot at a rate set by the
asymptotic slope, with flywheel torque as the bounded control input.  The
vertical coordinate is slaved to a linear CoM surface rather than integrated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, GeometryError, TorqueLimitError

GRAVITY = 9.81


def _require_finite(**values):
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class SagittalState:
    """CoM sagittal position [m] and velocity [m/s]."""

    x: float
    xdot: float

    def __post_init__(self):
        _require_finite(x=self.x, xdot=self.xdot)


@dataclass(frozen=True)
class LateralState:
    """CoM lateral position [m] and velocity [m/s]."""

    y: float
    ydot: float

    def __post_init__(self):
        _require_finite(y=self.y, ydot=self.ydot)


@dataclass(frozen=True)
class PathSurface:
    """Linear CoM height surface z = a*x + b."""

    a: float
    b: float

    def __post_init__(self):
        _require_finite(a=self.a, b=self.b)


def surface_height(surface: PathSurface, x: float) -> float:
    """Height of the CoM surface at sagittal position x."""
    return surface.a * x + surface.b


def omega_from_surface(surface: PathSurface, foot, g: float = GRAVITY) -> float:
    """Asymptotic slope sqrt(g / z_apex) of the step whose foot sits under `surface`."""
    z_apex = surface.a * foot[0] + surface.b - foot[2]
    if z_apex <= 0.0:
        raise GeometryError(f"CoM surface at or below the foot: z_apex={z_apex:.6g} m")
    return math.sqrt(g / z_apex)


@dataclass(frozen=True)
class StepParameters:
    """Vector-field parameters of one contact phase.

    `omega` is the asymptotic slope [1/s], `foot` the 3D stance position,
    `surface` the linear CoM height constraint, and the torque limits bound
    the flywheel moments available in each plane.
    """

    omega: float
    foot: tuple[float, float, float]
    surface: PathSurface
    mass: float = 1.0
    gravity: float = GRAVITY
    tau_y_limits: tuple[float, float] = (-3.0, 3.0)
    tau_x_limits: tuple[float, float] = (-3.0, 3.0)

    def __post_init__(self):
        if not (self.omega > 0.0 and math.isfinite(self.omega)):
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not (self.mass > 0.0 and self.gravity > 0.0):
            raise ValueError("mass and gravity must be positive")
        if len(self.foot) != 3:
            raise ValueError("foot must be a 3-tuple (x, y, z)")
        for limits, name in ((self.tau_y_limits, "tau_y"), (self.tau_x_limits, "tau_x")):
            if limits[0] > limits[1]:
                raise ValueError(f"{name} limits out of order: {limits}")

    @classmethod
    def for_surface(cls, foot, surface: PathSurface, g: float = GRAVITY, **kwargs):
        """Build parameters with omega derived from the surface geometry."""
        omega = omega_from_surface(surface, foot, g)
        return cls(omega=omega, foot=tuple(foot), surface=surface, gravity=g, **kwargs)


def _check_torque(tau: float, limits: tuple[float, float], name: str):
    if not (limits[0] <= tau <= limits[1]):
        raise TorqueLimitError(f"{name}={tau} outside limits {limits}")


def sagittal_derivative(s: SagittalState, p: StepParameters, tau_y: float) -> tuple[float, float]:
    """Sagittal vector field (xdot, xddot) under flywheel pitch torque tau_y."""
    _check_torque(tau_y, p.tau_y_limits, "tau_y")
    w2 = p.omega * p.omega
    xddot = w2 * (s.x - p.foot[0]) - w2 / (p.mass * p.gravity) * tau_y
    return s.xdot, xddot


def lateral_derivative(s: LateralState, p: StepParameters, tau_x: float) -> tuple[float, float]:
    """Lateral vector field (ydot, yddot) under flywheel roll torque tau_x."""
    _check_torque(tau_x, p.tau_x_limits, "tau_x")
    w2 = p.omega * p.omega
    yddot = w2 * (s.y - p.foot[1]) - w2 / (p.mass * p.gravity) * tau_x
    return s.ydot, yddot


def closed_form_state(x0: float, xdot0: float, x_foot: float, omega: float,
                      t: float) -> SagittalState:
    """Exact torque-free evolution of the pendulum over time t (may be negative)."""
    if omega <= 0.0:
        raise ValueError(f"omega must be positive, got {omega}")
    ch = math.cosh(omega * t)
    sh = math.sinh(omega * t)
    rel = x0 - x_foot
    x = rel * ch + xdot0 / omega * sh + x_foot
    xdot = omega * rel * sh + xdot0 * ch
    return SagittalState(x, xdot)


def orbital_energy(pos: float, vel: float, foot: float, omega: float) -> float:
    """Conserved quantity vel^2 - omega^2 (pos - foot)^2 of the torque-free pendulum."""
    rel = pos - foot
    return vel * vel - omega * omega * rel * rel


def _accel(pos: float, foot: float, w2: float, tau_term: float) -> float:
    return w2 * (pos - foot) - tau_term


def rk4_step(pos: float, vel: float, foot: float, omega: float, tau: float,
             dt: float, mass: float = 1.0, gravity: float = GRAVITY) -> tuple[float, float]:
    """One classical 4th-order step with torque held constant over the step."""
    w2 = omega * omega
    tau_term = w2 / (mass * gravity) * tau
    k1x = vel
    k1v = _accel(pos, foot, w2, tau_term)
    k2x = vel + 0.5 * dt * k1v
    k2v = _accel(pos + 0.5 * dt * k1x, foot, w2, tau_term)
    k3x = vel + 0.5 * dt * k2v
    k3v = _accel(pos + 0.5 * dt * k2x, foot, w2, tau_term)
    k4x = vel + dt * k3v
    k4v = _accel(pos + dt * k3x, foot, w2, tau_term)
    pos_next = pos + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    vel_next = vel + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return pos_next, vel_next


def const_accel_step(pos: float, vel: float, foot: float, omega: float, tau: float,
                     dt: float, mass: float = 1.0, gravity: float = GRAVITY) -> tuple[float, float]:
    """One step assuming the acceleration stays constant over the increment."""
    w2 = omega * omega
    acc = _accel(pos, foot, w2, w2 / (mass * gravity) * tau)
    return pos + vel * dt + 0.5 * acc * dt * dt, vel + acc * dt


_STEPPERS = {"rk4": rk4_step, "const_accel": const_accel_step}


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled integration record: time, state, control, surface height."""

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    tau: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        n = len(self.t)
        if any(len(a) != n for a in (self.pos, self.vel, self.tau, self.z)):
            raise ValueError("trajectory arrays must share one length")
        if n > 1:
            dts = np.diff(self.t)
            if np.any(dts <= 0.0):
                raise ValueError("trajectory times must be strictly increasing")
            if not np.allclose(dts, dts[0], rtol=1e-9, atol=1e-12):
                raise ValueError("trajectory times must be uniformly spaced")

    @property
    def n_samples(self) -> int:
        return len(self.t)

    def final_state(self) -> SagittalState:
        return SagittalState(float(self.pos[-1]), float(self.vel[-1]))


def _resolve_schedule(controls, n_steps: int):
    """Normalize a control schedule to a callable (step index, pos, vel) -> tau."""
    if controls is None:
        return lambda k, pos, vel: 0.0
    if callable(controls):
        return controls
    if isinstance(controls, (int, float)):
        value = float(controls)
        return lambda k, pos, vel: value
    seq = [float(c) for c in controls]
    if len(seq) != n_steps:
        raise ValueError(f"control sequence length {len(seq)} != n_steps {n_steps}")
    return lambda k, pos, vel: seq[k]


def integrate_trajectory(s0, p: StepParameters, controls=None, dt: float = 1e-3,
                         n_steps: int = 0, scheme: str = "rk4",
                         axis: str = "sagittal") -> Trajectory:
    """Integrate the PIPM vector field under a piecewise-constant torque schedule.

    `controls` may be None (zero torque), a scalar, a length-`n_steps`
    sequence, or a callable (step, pos, vel) -> torque.  For the lateral
    plane pass ``axis="lateral"`` and a LateralState.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if n_steps < 0:
        raise ValueError(f"n_steps must be non-negative, got {n_steps}")
    if axis == "sagittal":
        pos, vel = s0.x, s0.xdot
        foot, limits = p.foot[0], p.tau_y_limits
    elif axis == "lateral":
        pos, vel = s0.y, s0.ydot
        foot, limits = p.foot[1], p.tau_x_limits
    else:
        raise ValueError(f"unknown axis {axis!r}")
    try:
        stepper = _STEPPERS[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(_STEPPERS)}")

    schedule = _resolve_schedule(controls, n_steps)
    name = "tau_y" if axis == "sagittal" else "tau_x"
    ts = [0.0]
    xs = [pos]
    vs = [vel]
    taus = [0.0]
    for k in range(n_steps):
        tau = float(schedule(k, pos, vel))
        _check_torque(tau, limits, name)
        taus[-1] = tau
        pos, vel = stepper(pos, vel, foot, p.omega, tau, dt, p.mass, p.gravity)
        if not (math.isfinite(pos) and math.isfinite(vel)):
            raise DivergenceError(k + 1)
        ts.append((k + 1) * dt)
        xs.append(pos)
        vs.append(vel)
        taus.append(tau)
    # surface height tracks the sagittal coordinate; lateral motion stays on z(x)
    xs_arr = np.asarray(xs)
    if axis == "sagittal":
        z = p.surface.a * xs_arr + p.surface.b
    else:
        z = np.full_like(xs_arr, surface_height(p.surface, p.foot[0]))
    return Trajectory(np.asarray(ts), xs_arr, np.asarray(vs), np.asarray(taus), z)
