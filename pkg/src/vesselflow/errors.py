"""Exception types shared across the simulator."""


class SimulationError(Exception):
    """Base class for failures raised by the solver stack."""


class TubeLawError(SimulationError):
    """Tube-law evaluation failed: argument outside the law's admissible
    range, or a nonpositive pressure slope where a strictly increasing
    law is required."""


class CollapsedVesselError(SimulationError):
    """Cross-sectional area fell below the configured floor."""


class HyperbolicityViolation(SimulationError):
    """c^2 + a*b <= 0: the 2x2 wave system has no real characteristic
    speeds at the reported location."""


class CFLViolation(SimulationError):
    """A characteristic foot would travel farther per step than the
    Courant bound allows."""


class SingularJunction(SimulationError):
    """A node-closure linear system is singular or numerically
    unsolvable. Usually means the endpoint condition a*b > 0 failed, or
    node parameters are degenerate."""

    def __init__(self, message, node_id=None, condition_estimate=None):
        super().__init__(message)
        self.node_id = node_id
        self.condition_estimate = condition_estimate


class PicardDivergence(SimulationError):
    """The per-step fixed-point iteration did not converge within the
    allowed number of iterations. Reducing dt usually helps."""

    def __init__(self, message, deviations=None):
        super().__init__(message)
        self.deviations = list(deviations) if deviations is not None else []


class WellPosednessFailure(SimulationError):
    """A solvability condition check failed; carries the report."""

    def __init__(self, message, report=None, t=None):
        super().__init__(message)
        self.report = report
        self.t = t


class ConfigError(ValueError):
    """Configuration input is malformed or inconsistent."""
