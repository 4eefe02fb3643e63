"""Exception types shared across the package."""


class TorusHJError(Exception):
    """Base class for all package errors."""


class GridError(TorusHJError, ValueError):
    """Bad grid construction or non-finite query points."""


class ControlError(TorusHJError, ValueError):
    """Operation not available for the given control specification."""


class SchemeError(TorusHJError, ValueError):
    """Time step violates the one-cell stability bound, or bad scheme input."""


class ConvergenceError(TorusHJError, RuntimeError):
    """An iteration failed to reach its stopping rule within its budget."""


class ConfigError(TorusHJError, ValueError):
    """Configuration file cannot be parsed or validated."""
