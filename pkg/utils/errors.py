"""Error hierarchy shared by every package."""


class IotNotError(Exception):
    """Base class for all errors raised by this project."""


class DataError(IotNotError):
    """Malformed or unusable input data. The CLI maps these to exit code 2."""
