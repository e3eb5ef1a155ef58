"""Phase-space deviation metrics: tangent manifold, cotangent progression, norms.

The tangent manifold sigma is a scalar level function whose zero set is the
nominal phase trajectory of a step; the cotangent field zeta measures advance
along that trajectory and is orthogonal to the sigma isolines everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, ManifoldDomainError, ParameterError
from .pendulum import SagittalState


@dataclass(frozen=True)
class ManifoldDescriptor:
    """Apex velocity, foot position, and asymptotic slope of one nominal manifold."""

    xdot_apex: float
    x_foot: float
    omega: float

    def __post_init__(self):
        if not (self.omega > 0.0 and math.isfinite(self.omega)):
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not math.isfinite(self.xdot_apex):
            raise ValueError("xdot_apex must be finite")

    @property
    def sigma_scale(self) -> float:
        """Natural magnitude of sigma for this manifold, xdot_apex^4 / omega^2."""
        return self.xdot_apex ** 4 / self.omega ** 2


@dataclass(frozen=True)
class BundleSpec:
    """Half-width of the invariant tube around a nominal manifold."""

    epsilon: float

    def __post_init__(self):
        if not (self.epsilon > 0.0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def sigma_general(state: SagittalState, x0: float, xdot0: float, x_foot: float,
                  omega: float) -> float:
    """Tangent-manifold deviation for an arbitrary initial condition (x0, xdot0)."""
    if omega <= 0.0:
        raise ValueError(f"omega must be positive, got {omega}")
    x, xd = state.x, state.xdot
    r0 = x0 - x_foot
    return (r0 * r0 * (2.0 * xdot0 * xdot0 - xd * xd
                       + omega * omega * (x - x0) * (x + x0 - 2.0 * x_foot))
            - xdot0 * xdot0 * (x - x_foot) ** 2
            + xdot0 * xdot0 * (xd * xd - xdot0 * xdot0) / (omega * omega))


def sigma_apex(state: SagittalState, m: ManifoldDescriptor) -> float:
    """Tangent-manifold deviation when the initial condition is the apex state."""
    x, xd = state.x, state.xdot
    rel = x - m.x_foot
    va2 = m.xdot_apex * m.xdot_apex
    w2 = m.omega * m.omega
    return va2 / w2 * (xd * xd - va2 - w2 * rel * rel)


def sigma_apex_from_v2(v2, x, m: ManifoldDescriptor):
    """sigma_apex evaluated from squared velocity; accepts numpy arrays."""
    rel = x - m.x_foot
    va2 = m.xdot_apex * m.xdot_apex
    w2 = m.omega * m.omega
    return va2 / w2 * (v2 - va2 - w2 * rel * rel)


def zeta(state: SagittalState, x0: float, xdot0: float, x_foot: float,
         omega: float, zeta0: float = 1.0) -> float:
    """Cotangent progression value at `state`, referenced to (x0, xdot0, zeta0)."""
    if xdot0 == 0.0:
        raise ManifoldDomainError("reference velocity xdot0 must be nonzero")
    if x0 == x_foot:
        raise ManifoldDomainError("reference position x0 must differ from x_foot")
    if state.xdot * xdot0 <= 0.0:
        raise ManifoldDomainError(
            f"xdot={state.xdot} must share the sign of xdot0={xdot0}")
    ratio = state.xdot / xdot0
    return zeta0 * ratio ** (omega * omega) * (state.x - x_foot) / (x0 - x_foot)


def bundle_contains(sigma: float, spec: BundleSpec) -> bool:
    """Boundary-inclusive membership test |sigma| <= epsilon."""
    return abs(sigma) <= spec.epsilon


def sensitivity_norm(sigma_samples, zeta_d: float, zeta_trans: float) -> float:
    """RMS of sigma over [zeta_d, zeta_trans], trapezoid rule over the samples.

    `sigma_samples` is an ordered iterable of (zeta, sigma) pairs covering the
    interval.
    """
    if not zeta_trans > zeta_d:
        raise ParameterError(f"zeta_trans={zeta_trans} must exceed zeta_d={zeta_d}")
    pts = sorted((float(z), float(s)) for z, s in sigma_samples)
    if len(pts) < 2:
        raise InsufficientDataError("need at least two (zeta, sigma) samples")
    zs = np.array([p[0] for p in pts])
    ss = np.array([p[1] for p in pts])
    span = zeta_trans - zeta_d
    tol = 1e-9 * max(1.0, abs(zeta_d), abs(zeta_trans))
    if zs[0] > zeta_d + tol or zs[-1] < zeta_trans - tol:
        raise InsufficientDataError(
            f"samples cover [{zs[0]:.6g}, {zs[-1]:.6g}], "
            f"need [{zeta_d:.6g}, {zeta_trans:.6g}]")
    inner = (zs > zeta_d) & (zs < zeta_trans)
    zi = np.concatenate(([zeta_d], zs[inner], [zeta_trans]))
    si = np.interp(zi, zs, ss)
    integral = np.trapezoid(si * si, zi)
    return math.sqrt(integral / span)
