"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid or infeasible configuration (names the offending field)."""


class ProtocolError(RuntimeError):
    """A message or call violated the agent/coordinator protocol."""


class DomainError(ValueError):
    """An argument lies outside the domain of a function."""


class NoBaselineError(DomainError):
    """Transfer rate is undefined because the baseline curve has zero area."""
