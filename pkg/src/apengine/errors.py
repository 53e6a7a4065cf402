"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class StoreError(EngineError):
    pass


class NotFoundError(StoreError):
    pass


class DuplicateVersionError(StoreError):
    pass


class InvariantError(StoreError):
    """A record violates one of its declared invariants."""


class CorruptRecordError(StoreError):
    def __init__(self, path: str, line_no: int, reason: str):
        self.path = path
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"corrupt record in {path} line {line_no}: {reason}")


class UnembeddableTextError(EngineError):
    pass


class DimensionMismatchError(EngineError):
    pass


class ProviderError(EngineError):
    """Remote provider failure (timeout, bad status, malformed response)."""

    def __init__(self, message: str, status: int | None = None, body: str = ""):
        self.status = status
        self.body = body[:200]
        detail = message
        if status is not None:
            detail += f" (HTTP {status}: {self.body})"
        super().__init__(detail)


class UnknownEntityError(EngineError):
    pass


class AliasConflictError(EngineError):
    pass


class ParseError(EngineError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class MixedUnitsError(EngineError):
    """A claim group mixes incompatible units; pooling refused."""


class RejectedSubmissionError(EngineError):
    """Commit was attempted on a rejected validation report."""
