"""Exception types shared across the package."""


class PmtkError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(PmtkError):
    """Invalid configuration or usage: unknown keys, missing files, bad values.

    Maps to CLI exit code 1.
    """


class DataError(PmtkError):
    """Malformed input data: tensor files, traces, or numeric payloads.

    Maps to CLI exit code 2.
    """


class TensorFormatError(DataError):
    """A tensor file that violates the on-disk format."""
