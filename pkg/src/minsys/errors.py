"""Exception hierarchy shared by every module of the package."""


class MinsysError(Exception):
    """Base class for all errors raised by :mod:`minsys`."""


class DimensionError(MinsysError, ValueError):
    """Input arrays have incompatible or unsupported shapes."""


class GridTooCoarseError(MinsysError, ValueError):
    """The grid has too few nodes for the requested stencil."""


class BoundaryNodeError(MinsysError, IndexError):
    """A jet or curvature was requested at a boundary node."""


class UnknownPresetError(MinsysError, KeyError):
    """No preset with the requested name exists."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown preset"


class PreconditionError(MinsysError, ValueError):
    """A documented precondition of an operation does not hold."""


class DivergenceError(MinsysError, FloatingPointError):
    """A solver produced non-finite values.

    Attributes
    ----------
    node : tuple of int
        Grid multi-index of the first offending node.
    iteration : int
        Iteration at which the blow-up was detected.
    """

    def __init__(self, message, node=None, iteration=None):
        super().__init__(message)
        self.node = node
        self.iteration = iteration


class StagnationError(MinsysError, RuntimeError):
    """The Newton line search failed to reduce the residual."""


class SingularLinearizationError(MinsysError, RuntimeError):
    """The Newton linearization could not be solved."""


class ConfigError(MinsysError, ValueError):
    """A run configuration is invalid."""


class FieldFormatError(MinsysError, ValueError):
    """A field file is malformed or does not describe a complete box grid."""
