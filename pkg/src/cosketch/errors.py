"""Exception types shared across the package.

Every error that is part of an operation contract gets its own class so
callers can catch precisely; retryable backend errors derive from
BackendError.
"""


class CosketchError(Exception):
    """Base class for all package errors."""


class DegenerateInput(CosketchError):
    """Point set too small or collinear for hull construction."""


class EmptyInput(CosketchError):
    """An operation received no strokes / an empty raster."""


class BadThresholds(CosketchError):
    """Canny low/high thresholds are out of order."""


class DimensionMismatch(CosketchError):
    """Rasters or padding records disagree about sizes."""


class EmptyRegistry(CosketchError):
    """Style selection over an empty registry."""


class UnknownContact(CosketchError):
    """stroke_point / stroke_end for a contact id with no open stroke."""


class ContactAlreadyActive(CosketchError):
    """stroke_begin for a contact id that already has an open stroke."""


class StaleBlob(CosketchError):
    """Patch applied to a blob that is no longer generating."""


class OutOfBounds(CosketchError):
    """Patch region outside the canvas."""


class QueueFull(CosketchError):
    """Bounded job queue rejected a new job (backpressure signal)."""


class BackendError(CosketchError):
    """Base for generation backend failures."""


class BackendUnavailable(BackendError):
    """Backend not reachable; retryable."""


class BackendTimeout(BackendError):
    """Backend did not answer in time; retryable."""


class BadResponse(BackendError):
    """Backend answered with a malformed or wrong-sized image; terminal."""


class ProtocolError(CosketchError):
    """Malformed or out-of-contract client message."""


class UnreadableInput(CosketchError):
    """CLI input file missing or not a decodable image."""


class WriteFailure(CosketchError):
    """CLI could not write an artifact file."""


class ConnectFailure(CosketchError):
    """Load harness could not reach the server."""


class BindFailure(CosketchError):
    """Server could not bind its listen port."""
