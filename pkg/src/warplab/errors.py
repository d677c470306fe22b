"""Exception hierarchy shared by all modules."""


class WarpLabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(WarpLabError, ValueError):
    """A time value lies outside the open interval of the warping function."""


class CausalityError(WarpLabError):
    """A height field fails to define a spacelike graph (|Du| >= f(u))."""


class ConditioningError(WarpLabError):
    """The graph is spacelike but too close to null for a stable evaluation."""


class HypothesisError(WarpLabError):
    """A geometric hypothesis required by a check is not certified."""


class CapacityError(WarpLabError, ValueError):
    """Degenerate or disconnected condenser."""


class ConfigError(WarpLabError, ValueError):
    """Invalid experiment configuration; ``problems`` lists key paths."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
