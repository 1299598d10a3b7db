"""Robot Context Protocol gateway: schema-validated read/write/execute/subscribe
over HTTP, WebSocket, and SSE, against pluggable robot backends."""

__version__ = "0.1.0"

from .wire import (  # noqa: F401
    Envelope,
    ErrorCode,
    ErrorDetail,
    Kind,
    Op,
    ProtocolError,
    Status,
    decode_envelope,
    encode_envelope,
)
