"""Shared exception types."""


class BackendError(RuntimeError):
    """A remote backend failed after all retry attempts."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class FixtureMissingError(FileNotFoundError):
    """A replay fixture expected on disk is absent (configuration error)."""


class AgentParseError(ValueError):
    """A VLM reply could not be parsed; carries the raw text for logging."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class IngestError(ValueError):
    """Dataset ingestion failed (e.g. missing depth for a selected frame)."""
