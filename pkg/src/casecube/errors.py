"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures to process status without inspecting messages.
"""


class CasecubeError(Exception):
    exit_code = 3


class ConfigurationError(CasecubeError, ValueError):
    """Invalid arguments, specs or flags."""

    exit_code = 1


class DataError(CasecubeError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DesignError(DataError):
    """A sampling design that cannot be run on the given cohort."""


class NumericError(CasecubeError, ArithmeticError):
    exit_code = 3


class DegenerateDesignError(NumericError):
    """Singular information or regression matrix."""


class RankDeficiencyError(DegenerateDesignError):
    pass


class SeparationError(NumericError):
    """Monotone partial likelihood; coefficients diverge."""


class ExperimentError(NumericError):
    """A simulation could not produce its reference fit."""


class StateError(CasecubeError, RuntimeError):
    """An operation was called on an object in the wrong state."""


class InvariantViolation(CasecubeError, AssertionError):
    """Internal invariant broken; indicates a bug rather than bad input."""


class AggregationError(CasecubeError, ValueError):
    pass
