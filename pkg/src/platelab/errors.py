"""Exception hierarchy shared by all platelab modules."""


class PlateLabError(Exception):
    """Base class for every error raised by platelab."""


class InputError(PlateLabError, ValueError):
    """Malformed or non-finite input data."""


class GridMismatchError(InputError):
    """Fields combined in one operation live on different grids."""


class NonIntegrableFieldError(PlateLabError):
    """A vector field handed to potential integration is not curl free."""

    def __init__(self, message, residual, tolerance):
        super().__init__(f"{message} (curl residual {residual:.3e} > tolerance {tolerance:.3e})")
        self.residual = residual
        self.tolerance = tolerance


class DegenerateLoadError(InputError):
    """The load vanishes identically after removing its mean."""


class BranchAmbiguityError(PlateLabError):
    """Rotation logarithm requested at (or too close to) angle pi."""


class DomainError(PlateLabError):
    """A rotation expected on the optimal set lies off it."""


class ProjectionUndefinedError(PlateLabError):
    """Projection onto the optimal set requested beyond the injectivity guard."""


class InconsistencyError(PlateLabError):
    """An internal consistency check failed (for instance a 2-dimensional optimal set)."""


class NotAnIsometryError(PlateLabError):
    """A map expected to be an isometric embedding violates the metric condition."""


class NonDevelopableError(PlateLabError):
    """An out-of-plane profile has a non-vanishing Hessian determinant."""


class PreconditionError(PlateLabError):
    """A documented precondition of an operation does not hold."""


class AdmissibilityError(PreconditionError):
    """A quadruplet (u, v, R, W) is not admissible."""


class DegenerateFitError(PlateLabError):
    """Scaling regression over energies indistinguishable from zero."""


class ConfigError(PlateLabError):
    """Invalid run configuration."""
