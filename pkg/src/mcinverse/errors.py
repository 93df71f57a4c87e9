"""Exception hierarchy shared by the solvers, the containers and the CLI."""


class McInverseError(Exception):
    """Base class for all package errors."""


class GridMismatch(McInverseError, ValueError):
    pass


class DomainError(McInverseError, ValueError):
    pass


class NumericalFailure(McInverseError):
    """A solver could not deliver a trustworthy answer."""


class NearSingular(NumericalFailure):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class NoConvergence(NumericalFailure):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ResonantEnergy(NumericalFailure):
    pass


class GridTooCoarse(NumericalFailure):
    pass


class ContainerError(McInverseError, IOError):
    pass


class BadMagic(ContainerError):
    pass


class VersionMismatch(ContainerError):
    pass


class TruncatedFile(ContainerError):
    pass


class ConfigError(McInverseError, ValueError):
    pass
