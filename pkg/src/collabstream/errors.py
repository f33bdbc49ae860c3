"""Exception hierarchy for the collabstream engine."""


class CollabStreamError(Exception):
    """Base class for all engine errors."""


class ConfigError(CollabStreamError, ValueError):
    pass


class EventBeforeSession(CollabStreamError, ValueError):
    pass


class MalformedLine(CollabStreamError, ValueError):
    """A wire line that is not a UTF-8 JSON object."""


class SchemaViolation(MalformedLine):
    """A JSON object with a missing or ill-typed field."""

    def __init__(self, field: str, detail: str = ""):
        self.field = field
        msg = f"schema violation in field {field!r}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class UnknownType(CollabStreamError, ValueError):
    pass


class UnknownParticipant(CollabStreamError, ValueError):
    pass


class RoutedLate(CollabStreamError):
    """Event only overlaps buckets that were already finalized."""


class InvalidPose(CollabStreamError, ValueError):
    pass


class DegenerateGeometry(CollabStreamError, ValueError):
    pass


class InvalidDistance(CollabStreamError, ValueError):
    pass


class DimensionMismatch(CollabStreamError, ValueError):
    pass


class InsufficientExamples(CollabStreamError, ValueError):
    pass


class TimeoutExceeded(CollabStreamError):
    pass


class BackendError(CollabStreamError):
    pass


class StorageError(CollabStreamError, OSError):
    pass


class OrderViolation(StorageError):
    pass


class ChecksumMismatch(StorageError):
    pass


class UndefinedMetric(CollabStreamError, ValueError):
    pass


class ScriptError(CollabStreamError, ValueError):
    pass
