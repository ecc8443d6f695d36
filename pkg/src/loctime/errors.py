class LoctimeError(Exception):
    """Base class for errors raised by loctime."""


class DomainError(LoctimeError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(LoctimeError, ValueError):
    """Inconsistent or invalid configuration of a sampler, ladder or run."""


class UsageError(LoctimeError, ValueError):
    """Operation called on incompatible or empty inputs."""
