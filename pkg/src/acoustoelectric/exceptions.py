"""Exception hierarchy.

The CLI maps these onto its exit codes: configuration problems exit with 2,
violated model assumptions and degeneracies with 3, numerical failures with 4.
"""


class AcoustoElectricError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 4


class InvalidArgumentError(AcoustoElectricError, ValueError):
    exit_code = 2


class ConfigError(InvalidArgumentError):
    exit_code = 2


class ModelAssumptionError(AcoustoElectricError, ValueError):
    """Input violates a modelling assumption (conductivity bounds, source support)."""

    exit_code = 3


class SupportViolationError(ModelAssumptionError):
    pass


class ModulationAmplitudeError(ModelAssumptionError):
    pass


class DegeneracyError(ModelAssumptionError):
    """The reconstruction is undefined, e.g. for an elasto-electric constant of one."""


class IllPosednessError(DegeneracyError):
    """Auxiliary gradients are (numerically) dependent on part of the region."""

    def __init__(self, message, mask=None):
        super().__init__(message)
        self.mask = mask


class SolvabilityError(AcoustoElectricError, ValueError):
    """Load is incompatible with a pure-Neumann problem."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConvergenceError(AcoustoElectricError, RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
