class SdrlError(Exception):
    """Base class for package errors."""


class ConfigError(SdrlError, ValueError):
    """Invalid configuration value or key."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class ShapeError(SdrlError, ValueError):
    pass


class UpdateRejected(SdrlError, FloatingPointError):
    """An optimizer step was refused because it would store non-finite values."""


class UsageError(SdrlError, RuntimeError):
    pass


class InvariantBreach(SdrlError, RuntimeError):
    """Training reached a state that should be impossible (e.g. NaN actions)."""


class CheckpointError(SdrlError, ValueError):
    pass
