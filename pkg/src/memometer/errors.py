"""Exception types shared across the package."""


class MemometerError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(MemometerError):
    """Invalid configuration value or config file."""


class DataFormatError(MemometerError):
    """A data file does not match its declared layout."""


class IntegrationError(MemometerError):
    """Non-finite state encountered while integrating the flow.

    Carries the step index and the indices of the offending batch rows.
    """

    def __init__(self, message: str, step: int | None = None, indices=None):
        super().__init__(message)
        self.step = step
        self.indices = list(indices) if indices is not None else []


class BridgeError(MemometerError):
    """Failure while talking to an external score server."""
