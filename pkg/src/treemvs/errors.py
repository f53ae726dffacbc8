"""Exception hierarchy shared across the package."""


class TreeMVSError(Exception):
    """Base class for all package errors."""


class MalformedNodeError(TreeMVSError, ValueError):
    pass


class RootPredecessorError(TreeMVSError, ValueError):
    pass


class ArityError(TreeMVSError, ValueError):
    pass


class ScheduleError(TreeMVSError, ValueError):
    """A schedule emitted a value outside its declared bounds, or was asked
    for a value it cannot produce."""


class DomainError(TreeMVSError, ValueError):
    pass


class PreconditionError(TreeMVSError, ValueError):
    pass


class ConfigError(TreeMVSError, ValueError):
    """Invalid configuration. ``path`` is the offending key path, e.g.
    ``/components/1/beta/c``."""

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path or '/'}: {message}")


class NonConvergenceError(TreeMVSError, RuntimeError):
    def __init__(self, message, residual, sweeps):
        self.residual = residual
        self.sweeps = sweeps
        super().__init__(f"{message} (last change {residual:.3e} after {sweeps} sweeps)")


class ShapeMismatchError(TreeMVSError, ValueError):
    pass


class TerminalStateError(TreeMVSError, ValueError):
    pass


class RunawayEpisodeError(TreeMVSError, RuntimeError):
    pass


class InternalError(TreeMVSError, RuntimeError):
    pass


class MemoryBudgetError(PreconditionError):
    pass
