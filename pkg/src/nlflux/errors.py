"""Error classes shared across the package.

Three failure modes are distinguished so that callers (and the CLI exit
codes) can react differently: bad configuration, bad usage of an API
precondition, and numerical breakdown inside an otherwise valid setup.
"""


class ConfigurationError(ValueError):
    """Invalid geometry, kernel, or solver configuration."""


class UsageError(ValueError):
    """An operation was called outside its documented preconditions."""


class NumericalError(RuntimeError):
    """An iterative or direct solve failed to reach its tolerance."""
