"""Error taxonomy shared by every subsystem.

Each exception carries a stable ``code`` that the REST layer maps onto an
HTTP status, so any failure raised deep inside the platform surfaces as a
predictable API error.
"""

from __future__ import annotations


class PlatformError(Exception):
    """Base class for all platform errors."""

    code = "internal"

    def __init__(self, message: str, *, detail: list[dict] | None = None):
        super().__init__(message)
        self.message = message
        self.detail = detail or []


class ValidationError(PlatformError):
    """Malformed input: bad config, bad payload, bad file."""

    code = "validation"

    def __init__(self, message: str, *, detail: list[dict] | None = None, report=None):
        super().__init__(message, detail=detail)
        self.report = report


class NotFoundError(PlatformError):
    code = "not-found"


class ConflictError(PlatformError):
    """Duplicate create, write-once violation, and similar collisions."""

    code = "conflict"


class StateConflictError(PlatformError):
    """Operation not applicable in the current lifecycle state."""

    code = "state-conflict"


class IntegrityError(PlatformError):
    """Stored bytes no longer match their recorded digest, or unsafe archive entries."""

    code = "integrity"


class CapacityError(PlatformError):
    """Admission refused: declared resources exceed platform capacity."""

    code = "capacity"


HTTP_STATUS_BY_CODE = {
    "validation": 400,
    "not-found": 404,
    "conflict": 409,
    "state-conflict": 409,
    "capacity": 422,
    "integrity": 500,
    "internal": 500,
}
