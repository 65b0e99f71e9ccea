"""Exception hierarchy shared by every tractconn module."""


class TractconnError(Exception):
    """Base class for all tractconn errors."""


class ConfigurationError(TractconnError, ValueError):
    """Invalid parameters, affines or configuration files."""


class InvalidArgumentError(TractconnError, ValueError):
    """An operation was called with an argument outside its domain."""


class FormatError(TractconnError, ValueError):
    """A file could not be parsed."""


class UnsupportedFormatError(FormatError):
    """A file is well formed but uses a variant we do not read."""


class AttemptCapError(TractconnError, RuntimeError):
    """Tracking gave up before generating the requested number of streamlines."""

    def __init__(self, generated: int, requested: int, attempts: int):
        super().__init__(
            f"generated {generated} of {requested} streamlines after {attempts} attempts"
        )
        self.generated = generated
        self.requested = requested
        self.attempts = attempts


class ConsistencyError(TractconnError, AssertionError):
    """A built-in self-check disagreed with the primary result."""
