"""Exception hierarchy shared by the solver modules."""


class MesovortexError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(MesovortexError):
    pass


class ParameterError(MesovortexError, ValueError):
    pass


class DegenerateParameterError(ParameterError):
    """Raised for a = 1, where the pinning term is constant."""


class ResolutionError(MesovortexError):
    pass


class ConvergenceError(MesovortexError):
    """An iterative method hit its cap; ``stats`` holds the last state."""

    def __init__(self, message, stats=None, last_iterate=None):
        super().__init__(message)
        self.stats = stats
        self.last_iterate = last_iterate


class NumericError(MesovortexError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class ConfigError(MesovortexError):
    pass
