"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, parameters, or input files."""


class CapabilityError(RuntimeError):
    """A requested combination of terms/sets has no supported solver."""


class ConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap before reaching tolerance.

    Carries the best iterate found and its residual so callers can inspect
    or re-try with a looser tolerance.
    """

    def __init__(self, message, best=None, residual=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations
