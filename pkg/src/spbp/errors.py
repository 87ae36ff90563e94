"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SPBPError(Exception):
    """Base class for all errors raised by this package."""


class NotPSDError(SPBPError):
    """A covariance matrix has a significantly negative pivot."""


class EmptyInputError(SPBPError):
    pass


class OutOfBoundsError(SPBPError, IndexError):
    pass


class DimensionMismatchError(SPBPError, ValueError):
    pass


class SingularInnovationError(SPBPError):
    """The innovation covariance C_y + C_n cannot be inverted reliably."""


class DuplicateEdgeError(SPBPError):
    pass


class SelfLoopError(SPBPError):
    pass


class UnknownNodeError(SPBPError, KeyError):
    pass


class AsymmetricPairFnError(SPBPError):
    """A pair function declared symmetric failed the randomized check."""


class EmptyLogsError(SPBPError):
    pass


class SingularSystemError(SPBPError):
    pass


class DegenerateWeightsError(SPBPError):
    """Importance weights collapsed onto too few samples."""


class UpdateFailedError(SPBPError):
    """A node update failed; carries where in the run it happened."""

    def __init__(self, reason: str, *, node=None, iteration=None, run=None, time=None):
        self.reason = reason
        self.node = node
        self.iteration = iteration
        self.run = run
        self.time = time
        parts = [
            f"{name}={value}"
            for name, value in (("run", run), ("time", time), ("iteration", iteration), ("node", node))
            if value is not None
        ]
        context = f" [{', '.join(parts)}]" if parts else ""
        super().__init__(f"{reason}{context}")

    def with_context(self, **kwargs) -> "UpdateFailedError":
        fields = {"node": self.node, "iteration": self.iteration, "run": self.run, "time": self.time}
        fields.update({k: v for k, v in kwargs.items() if v is not None})
        err = UpdateFailedError(self.reason, **fields)
        err.__cause__ = self.__cause__
        return err


class ConfigError(SPBPError, ValueError):
    """Invalid scenario configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
