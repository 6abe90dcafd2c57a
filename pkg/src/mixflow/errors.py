"""Exception hierarchy shared by all mixflow modules.

Each class carries the process exit code the command line front end
should use when the error escapes a workflow.
"""


class MixflowError(Exception):
    """Base class for all library errors."""

    exit_code = 2


class ConfigError(MixflowError):
    """Invalid or incomplete run configuration."""

    exit_code = 1


class IoError(MixflowError):
    """Output could not be written."""

    exit_code = 1


class NonPositiveState(MixflowError):
    """A density or temperature is not strictly positive."""


class SingularSystem(MixflowError):
    """The constrained friction system is numerically singular."""


class NonHyperbolicState(MixflowError):
    """The sound speed radicand is not positive."""


class NoTemperatureRoot(MixflowError):
    """Temperature could not be recovered from the internal energy."""


class StepFailure(MixflowError):
    """A time step produced an inadmissible state."""


class GridMismatch(MixflowError):
    """Two trajectories do not share a grid or time samples."""


class RefinementBudgetExceeded(MixflowError):
    """Grid refinement did not converge within the allowed budget."""


class HypothesisViolated(MixflowError):
    """A constitutive hypothesis failed at a sampled state."""

    exit_code = 3


class StructureViolation(MixflowError):
    """A structural identity of the flow system failed."""

    exit_code = 3
