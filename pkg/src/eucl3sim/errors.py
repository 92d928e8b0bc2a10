"""Exception types for runtime (non-validation) failures."""


class SimulationError(Exception):
    """Base class for runtime failures of a simulation or solver."""


class GridCoverageError(SimulationError):
    """A frequency grid does not span the lines it is asked to hold."""


class DegenerateStationaryError(SimulationError):
    """A rate matrix has a non-unique stationary state and no initial
    state was supplied to resolve it."""


class FitConvergenceError(SimulationError):
    """Least-squares peak fit did not converge.

    Carries the best parameters found so far in ``best_result``.
    """

    def __init__(self, message, best_result=None):
        super().__init__(message)
        self.best_result = best_result
