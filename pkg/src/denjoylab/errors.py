"""Exception types shared by the package."""


class DenjoyLabError(Exception):
    """Base class."""


class DomainError(DenjoyLabError, ValueError):
    """Input outside the declared domain of a map or formula."""


class ConfigError(DenjoyLabError, ValueError):
    """Invalid or infeasible configuration."""


class TruncationError(DenjoyLabError):
    """A computation needed gaps beyond the truncation radius.

    ``last_valid`` holds the last index (step) that could be computed.
    """

    def __init__(self, msg, last_valid=None):
        super().__init__(msg)
        self.last_valid = last_valid


class PreconditionError(DenjoyLabError, ValueError):
    """A hypothesis of a check does not hold."""


class InternalError(DenjoyLabError, RuntimeError):
    """Something that should be impossible (e.g. lost bisection bracket)."""
