"""Exception hierarchy shared by the analysis modules."""


class NcveError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(NcveError, ValueError):
    """A configuration document is malformed; the message names the field."""


class NonFiniteEntry(NcveError, FloatingPointError):
    """A closed-form Gram entry overflowed to a non-finite value."""


class Infeasible(NcveError):
    """Moment targets have a component outside the numerical range of the Gram matrix."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UncontrollableMode(NcveError):
    """A mode with zero control coefficient carries a nonzero initial coefficient."""


class IllConditioned(NcveError):
    """A Gram matrix lost rank at the requested threshold."""


class PreconditionViolated(NcveError, ValueError):
    """An input failed a documented precondition check."""


class SeriesDiverged(NcveError):
    """Biorthogonal series partial sums failed the Cauchy check."""


class NotDiagonalizable(NcveError):
    """The coupling matrix has a nontrivial Jordan block."""


class BoundaryRoot(NcveError):
    """A characteristic root sits on the search contour even after perturbation."""


class NonConvergent(NcveError):
    """Newton refinement stalled inside a cell."""


class InconclusiveWindow(NcveError):
    """The search window does not cover the certified right-half-plane root bound."""
