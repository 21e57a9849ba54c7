"""Exception types raised by the regulator toolkit."""


class RegulatorError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(RegulatorError):
    """Matrix or vector dimensions are mutually inconsistent."""


class AssumptionViolated(RegulatorError):
    """A structural assumption on the problem data fails a hard check."""

    def __init__(self, which: str, detail: str = ""):
        self.which = which
        super().__init__(f"{which}" + (f": {detail}" if detail else ""))


class NonConvergedEigen(RegulatorError):
    """The eigenvalue solver failed to converge."""


class InconsistentCase(RegulatorError):
    """Neither the interior nor the boundary certificate holds within
    tolerance; signals ill-conditioned sphere-QP data."""


class NoSolution(RegulatorError):
    """The quadratic minmax has no solution for this multiplier value."""


class RankDeficientD(RegulatorError):
    """The linear term is outside the range of the singular saddle matrix."""


class BracketingFailed(RegulatorError):
    """Could not bracket a minimizer of the scalar multiplier function."""


class InfeasibleMultiplier(RegulatorError):
    """A multiplier falls below its nested feasibility bound."""


class SingularM(RegulatorError):
    """A stage matrix M is numerically singular despite feasibility."""


class BoundaryTooClose(RegulatorError):
    """The multiplier sits too close to the feasibility boundary for the
    requested finite-difference stencil."""


class NoSphereIntersection(RegulatorError):
    """The disturbance response cannot be completed onto the bound sphere."""


class NoFeasibleLambda(RegulatorError):
    """No feasible steady-state multiplier found within the bracket budget."""


class FixedPointDiverged(RegulatorError):
    """The steady-state Riccati fixed-point iteration diverged."""


class SingularPi(RegulatorError):
    """The steady-state Riccati matrix is not invertible; cannot certify."""


class Diverged(RegulatorError):
    """An iteration exceeded its divergence guard."""


class ScenarioError(RegulatorError):
    """A scenario file failed to parse or is semantically invalid."""
