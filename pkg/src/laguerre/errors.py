"""Exception hierarchy."""


class LaguerreError(Exception):
    """Base class for all errors raised by this package."""


class MalformedPolytope(LaguerreError):
    pass


class EmptyCell(LaguerreError):
    pass


class CoincidentSeeds(LaguerreError):
    pass


class DegenerateDomain(LaguerreError):
    pass


class CellExceedsMinimalImage(LaguerreError):
    """A periodic cell reaches beyond the largest image shell we build."""


class CellTooComplex(LaguerreError):
    """A cell has more faces or vertices than the kernel buffers hold."""


class InvalidTargets(LaguerreError):
    pass


class SolverError(LaguerreError):
    """Base for optimiser failures; carries the best state reached."""

    def __init__(self, message, weights=None, report=None):
        super().__init__(message)
        self.weights = weights
        self.report = report


class MaxIterationsExceeded(SolverError):
    pass


class LineSearchFailure(SolverError):
    pass


class EnergyIncrease(SolverError):
    """The Lloyd energy went up by more than the allowed slack."""


class InfeasibleSpec(LaguerreError):
    pass


class ConfigError(LaguerreError):
    pass


class IdMismatch(LaguerreError):
    pass
