"""Exception hierarchy for the toolkit.

Errors are grouped by how the command-line surface maps them to exit
codes: validation failures exit 1, numerical failures exit 2, output
failures exit 3.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class ValidationFailure(ToolkitError):
    """Bad inputs: shapes, assumption violations, malformed scenarios."""


class NumericalFailure(ToolkitError):
    """A numerical procedure could not meet its contract."""


class OutputFailure(ToolkitError):
    """Report emission failed."""


# -- validation ---------------------------------------------------------

class NegativeOffDiagonalError(ValidationFailure):
    """A generator has a negative off-diagonal rate."""


class RowSumViolationError(ValidationFailure):
    """A generator row does not sum to zero within tolerance."""


class DimensionMismatchError(ValidationFailure):
    """Array shapes are inconsistent with the declared dimensions."""


class CoefficientError(ValidationFailure):
    """A coefficient block violates its structural requirements."""


class AssumptionViolatedError(ValidationFailure):
    """The positive-definiteness assumption fails for some (regime, k)."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class UnclassifiableSignalError(ValidationFailure):
    """Forcing signals fit none of the supported integrability classes."""


class ForcingClassError(ValidationFailure):
    """An operation received forcing of the wrong integrability class."""


class ScenarioParseError(ValidationFailure):
    """Scenario file is malformed or contains unknown keys."""


class ScenarioValidationError(ValidationFailure):
    """Scenario file parsed but its contents are inconsistent."""


class GridMismatchError(ValidationFailure):
    """Two time grids that must align do not."""


class GridCoverageError(ValidationFailure):
    """A gain/feedforward table does not cover the simulation horizon."""


# -- numerical ----------------------------------------------------------

class ReducibleChainError(NumericalFailure):
    """The chain has no unique stationary distribution."""


class WellPosednessLostError(NumericalFailure):
    """The control weight R_k + D_k' P_1 D_k lost positive definiteness."""


class StepSizeError(NumericalFailure):
    """Step-halving retries exhausted without agreement."""


class ConvergenceError(NumericalFailure):
    """An iterative procedure exceeded its horizon or residual budget."""


class StabilizerCheckError(NumericalFailure):
    """Stationary gains converged but fail the dissipation certificate."""


class MonotonicityError(NumericalFailure):
    """Horizon monotonicity of the value matrices is violated."""


class ToleranceUnreachableError(NumericalFailure):
    """The truncation horizon needed for the tolerance exceeds the budget."""


class InsufficientPathsError(NumericalFailure):
    """Monte Carlo standard errors are too large on the fit window."""


class TailNotConvergedError(NumericalFailure):
    """The state second-moment integral has a non-negligible tail."""


class DegenerateFitError(NumericalFailure):
    """All fitted values sit at the numerical floor."""


class NumericalOutputError(NumericalFailure):
    """A report contains non-finite numbers and was refused."""
