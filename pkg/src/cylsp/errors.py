"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the domain of an operation (singular point, bad parameter)."""


class InvariantError(RuntimeError):
    """A computed object violates one of its structural invariants."""


class SolverError(RuntimeError):
    """A numerical solver failed to produce an acceptable answer."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class NonConvergenceError(SolverError):
    """Iteration cap reached before the residual tolerance."""


class StagnationError(SolverError):
    """Line search could not decrease the objective."""


class ConfigError(ValueError):
    """Malformed configuration file or options."""
