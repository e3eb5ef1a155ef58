"""Exception types shared across the toolkit."""


class PhaseSpaceError(Exception):
    """Base class for every domain error raised by this package."""


class TorqueLimitError(PhaseSpaceError):
    """Torque command outside the configured bounds."""


class GeometryError(PhaseSpaceError):
    """CoM surface at or below the foot contact point."""


class DivergenceError(PhaseSpaceError):
    """Numerical integration produced a non-finite state."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"state diverged at integration step {step}")


class InsufficientDataError(PhaseSpaceError):
    """Not enough samples to evaluate an integral or fit."""


class ManifoldDomainError(PhaseSpaceError):
    """State outside the domain of a manifold expression."""


class PlanningInfeasibleError(PhaseSpaceError):
    """Adjacent step manifolds cannot be connected."""


class NoTransitionError(PhaseSpaceError):
    """No real crossing between adjacent step manifolds."""


class DegenerateTransitionError(PhaseSpaceError):
    """Adjacent step manifolds coincide; crossing undefined."""


class NonConvergenceError(PhaseSpaceError):
    """Iterative search exhausted its budget; carries the best iterate."""

    def __init__(self, message: str, best=None, residual=None):
        self.best = best
        self.residual = residual
        super().__init__(message)


class ParameterError(PhaseSpaceError):
    """Invalid parameter combination."""


class InfeasibleReplanError(PhaseSpaceError):
    """Foot re-planning has no real solution for the requested apex velocity."""


class AutomatonError(PhaseSpaceError):
    """Illegal discrete transition or malformed automaton configuration."""


class ScenarioError(PhaseSpaceError):
    """Scenario document failed validation; carries the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
