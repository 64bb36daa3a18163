"""Exception types shared by the ingest, novelty, model and detection layers."""


class RumourError(Exception):
    """Base class for every error raised by the rumour detection engine"""


class ConfigError(RumourError, ValueError):
    """Invalid run configuration or command usage"""


class DataError(RumourError, ValueError):
    """Malformed or inconsistent input data"""


class StreamOrderError(DataError):
    """A message arrived with a timestamp earlier than its predecessor"""

    def __init__(self, previous_id: str, current_id: str, previous_ts: int, current_ts: int):
        self.previous_id = previous_id
        self.current_id = current_id
        super().__init__(
            f"Out-of-order stream: message '{current_id}' (t={current_ts}) "
            f"arrived after '{previous_id}' (t={previous_ts})"
        )


class FeatureError(DataError):
    """Feature extraction produced an invalid value"""

    def __init__(self, message: str, index: int = None):
        self.index = index
        super().__init__(message)


class ManifestMismatchError(DataError):
    """A model or vector was built against a different feature manifest"""

    def __init__(self, expected: str, actual: str):
        self.expected = expected
        self.actual = actual
        super().__init__(f"Feature manifest mismatch: expected {expected}, got {actual}")


class ModelFormatError(DataError):
    """Model file is truncated, corrupt or of an unsupported version"""


class MemoryFormatError(DataError):
    """Memory file is truncated, corrupt or of an unsupported version"""
