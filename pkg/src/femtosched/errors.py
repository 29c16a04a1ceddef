class ConfigError(ValueError):
    """Invalid scenario configuration. ``key`` names the offending setting when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class TraceError(ConfigError):
    """Video trace file missing or malformed."""


class InvariantViolation(RuntimeError):
    """An internal simulation invariant failed; the run is aborted."""
