"""Exception hierarchy shared across the package."""


class BandfuseError(Exception):
    """Base class for all package errors."""


class ConfigError(BandfuseError):
    """Invalid configuration, parameters, or argument combinations."""


class DataError(BandfuseError):
    """Malformed or inconsistent input data."""


class NoFeasiblePartition(BandfuseError):
    """No partition satisfies the size bounds for any candidate group count."""
