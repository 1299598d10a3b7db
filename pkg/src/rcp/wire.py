"""Canonical message envelope, error taxonomy, segmentation, and compression.

Everything here is a pure function over immutable-ish values; no shared
state, safe from any number of concurrent callers.

Wire form is UTF-8 JSON. The operation field is spelled ``"type"`` on the
wire; internally it is ``op`` so it cannot be confused with the envelope
kind (request/response/event). Requests omit the ``kind`` key (presence of
``"type"`` implies it); responses and events carry ``"kind"`` explicitly.
Absent optional fields are omitted, never emitted as ``null``.
"""

from __future__ import annotations

import base64
import binascii
import json
import math
import uuid
import zlib
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any

PROTOCOL_VERSION = "1.0"

#: Marker value carried in the ``enc`` field when a body is compressed.
BODY_ENC_DEFLATE = "deflate+base64"

#: Streaming transports split serialized envelopes larger than this.
DEFAULT_SEGMENT_THRESHOLD = 64 * 1024


class Kind(str, Enum):
    REQUEST = "request"
    RESPONSE = "response"
    EVENT = "event"


class Op(str, Enum):
    READ = "read"
    WRITE = "write"
    EXECUTE = "execute"
    SUBSCRIBE = "subscribe"
    UNSUBSCRIBE = "unsubscribe"
    DISCOVER = "discover"
    STATUS = "status"


class Status(str, Enum):
    OK = "ok"
    ACCEPTED = "accepted"
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"
    FAILED = "failed"
    REJECTED = "rejected"
    ERROR = "error"


class ErrorCode(str, Enum):
    MALFORMED = "MALFORMED"
    SCHEMA_VIOLATION = "SCHEMA_VIOLATION"
    UNKNOWN_PATH = "UNKNOWN_PATH"
    OP_NOT_SUPPORTED = "OP_NOT_SUPPORTED"
    UNAUTHORIZED = "UNAUTHORIZED"
    FORBIDDEN = "FORBIDDEN"
    OUT_OF_RANGE = "OUT_OF_RANGE"
    CONFLICT = "CONFLICT"
    BACKEND_UNAVAILABLE = "BACKEND_UNAVAILABLE"
    INTERNAL = "INTERNAL"


#: Ops that make no sense without a target path.
PATH_REQUIRED_OPS = frozenset({Op.READ, Op.WRITE, Op.EXECUTE, Op.SUBSCRIBE})


@dataclass(frozen=True)
class ErrorDetail:
    """Diagnostic attached to failed/rejected/error responses."""

    code: ErrorCode
    message: str
    origin: str
    remediation: str | None = None

    def to_wire(self) -> dict[str, str]:
        out = {"code": self.code.value, "message": self.message, "origin": self.origin}
        if self.remediation is not None:
            out["remediation"] = self.remediation
        return out

    @staticmethod
    def from_wire(obj: Any) -> "ErrorDetail":
        if not isinstance(obj, dict):
            raise ProtocolError(ErrorCode.MALFORMED, "error field must be an object", "wire")
        try:
            code = ErrorCode(obj["code"])
            message = obj["message"]
            origin = obj["origin"]
        except (KeyError, ValueError) as exc:
            raise ProtocolError(ErrorCode.MALFORMED, f"bad error detail: {exc}", "wire") from exc
        remediation = obj.get("remediation")
        if not isinstance(message, str) or not isinstance(origin, str):
            raise ProtocolError(ErrorCode.MALFORMED, "error message/origin must be strings", "wire")
        if remediation is not None and not isinstance(remediation, str):
            raise ProtocolError(ErrorCode.MALFORMED, "error remediation must be a string", "wire")
        return ErrorDetail(code, message, origin, remediation)


class ProtocolError(Exception):
    """Raised wherever an operation answers with an ErrorDetail."""

    def __init__(self, code: ErrorCode, message: str, origin: str, remediation: str | None = None):
        super().__init__(f"{code.value}: {message}")
        self.detail = ErrorDetail(code, message, origin, remediation)

    @property
    def code(self) -> ErrorCode:
        return self.detail.code


def iso_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def is_iso_utc(value: str) -> bool:
    """True for ISO-8601 UTC instants with a literal 'Z' suffix."""
    if not isinstance(value, str) or not value.endswith("Z"):
        return False
    try:
        datetime.fromisoformat(value[:-1] + "+00:00")
    except ValueError:
        return False
    return True


def new_id() -> str:
    return str(uuid.uuid4())


@dataclass
class Envelope:
    """The universal message wrapper.

    A request has ``op`` and no ``status``; a response or event has
    ``status`` and no ``op``. ``extra`` holds unknown top-level wire fields,
    preserved through decode/encode for forward compatibility.
    """

    kind: Kind
    op: Op | None = None
    path: str | None = None
    id: str | None = None
    timestamp: str | None = None
    body: Any = None
    status: Status | None = None
    error: ErrorDetail | None = None
    auth: str | None = None
    seq: int | None = None
    enc: str | None = None
    protocol_version: str = PROTOCOL_VERSION
    extra: dict[str, Any] = field(default_factory=dict)

    @staticmethod
    def request(op: Op, path: str | None = None, *, id: str | None = None,
                body: Any = None, auth: str | None = None,
                timestamp: str | None = None, **extra: Any) -> "Envelope":
        return Envelope(Kind.REQUEST, op=op, path=path, id=id, body=body,
                        auth=auth, timestamp=timestamp, extra=dict(extra))

    @staticmethod
    def response(status: Status, *, id: str, path: str | None = None,
                 body: Any = None, error: ErrorDetail | None = None,
                 timestamp: str | None = None) -> "Envelope":
        return Envelope(Kind.RESPONSE, status=status, id=id, path=path, body=body,
                        error=error, timestamp=timestamp or iso_now())

    @staticmethod
    def event(status: Status, *, path: str | None = None, id: str | None = None,
              body: Any = None, error: ErrorDetail | None = None,
              seq: int | None = None, timestamp: str | None = None) -> "Envelope":
        return Envelope(Kind.EVENT, status=status, path=path, id=id, body=body,
                        error=error, seq=seq, timestamp=timestamp or iso_now())


def _invariant_problem(env: Envelope) -> str | None:
    if env.protocol_version != PROTOCOL_VERSION:
        return f"unsupported protocol_version {env.protocol_version!r}"
    if env.kind is Kind.REQUEST:
        if env.op is None:
            return "request without op"
        if env.status is not None or env.error is not None or env.seq is not None:
            return "request must not carry status/error/seq"
        if env.path is None and env.op in PATH_REQUIRED_OPS:
            return f"op {env.op.value!r} requires a path"
    else:
        if env.status is None:
            return f"{env.kind.value} without status"
        if env.op is not None or env.auth is not None:
            return f"{env.kind.value} must not carry op/auth"
        if env.timestamp is None:
            return f"{env.kind.value} without timestamp"
        if env.kind is Kind.RESPONSE:
            if env.id is None:
                return "response without correlation id"
            if env.seq is not None:
                return "seq is event-only"
    if env.timestamp is not None and not is_iso_utc(env.timestamp):
        return f"timestamp {env.timestamp!r} is not ISO-8601 UTC"
    if env.seq is not None and (not isinstance(env.seq, int) or isinstance(env.seq, bool) or env.seq < 0):
        return "seq must be a non-negative integer"
    return None


# Stable key layout for the serialized form; extras follow in their own order.
_WIRE_ORDER = ("protocol_version", "kind", "type", "path", "id", "timestamp",
               "status", "seq", "enc", "auth", "error", "body")


def envelope_to_wire(env: Envelope) -> dict[str, Any]:
    problem = _invariant_problem(env)
    if problem is not None:
        raise ProtocolError(ErrorCode.INTERNAL, f"invalid envelope: {problem}", "wire")
    out: dict[str, Any] = {"protocol_version": env.protocol_version}
    if env.kind is not Kind.REQUEST:
        out["kind"] = env.kind.value
    if env.op is not None:
        out["type"] = env.op.value
    if env.path is not None:
        out["path"] = env.path
    if env.id is not None:
        out["id"] = env.id
    if env.timestamp is not None:
        out["timestamp"] = env.timestamp
    if env.status is not None:
        out["status"] = env.status.value
    if env.seq is not None:
        out["seq"] = env.seq
    if env.enc is not None:
        out["enc"] = env.enc
    if env.auth is not None:
        out["auth"] = env.auth
    if env.error is not None:
        out["error"] = env.error.to_wire()
    if env.body is not None:
        out["body"] = env.body
    for key, value in env.extra.items():
        if key not in _WIRE_ORDER:
            out[key] = value
    return out


def encode_envelope(env: Envelope) -> bytes:
    return json.dumps(envelope_to_wire(env), ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def _malformed(message: str) -> ProtocolError:
    return ProtocolError(ErrorCode.MALFORMED, message, "wire")


def _string_field(obj: dict[str, Any], key: str) -> str | None:
    value = obj.get(key)
    if value is None:
        return None
    if not isinstance(value, str):
        raise _malformed(f"field {key!r} must be a string")
    return value


def envelope_from_wire(obj: Any) -> Envelope:
    if not isinstance(obj, dict):
        raise _malformed("envelope must be a JSON object")

    version = obj.get("protocol_version", PROTOCOL_VERSION)
    if version != PROTOCOL_VERSION:
        raise _malformed(f"unsupported protocol_version {version!r}")

    op_raw = obj.get("type")
    status_raw = obj.get("status")
    kind_raw = obj.get("kind")
    if op_raw is not None and status_raw is not None:
        raise _malformed("message carries both an operation and a status")

    if op_raw is not None:
        kind = Kind.REQUEST
        if kind_raw not in (None, Kind.REQUEST.value):
            raise _malformed(f"kind {kind_raw!r} conflicts with request operation")
    elif status_raw is not None:
        if kind_raw is None:
            raise _malformed("response/event requires an explicit kind")
        try:
            kind = Kind(kind_raw)
        except ValueError:
            raise _malformed(f"unknown kind {kind_raw!r}") from None
        if kind is Kind.REQUEST:
            raise _malformed("kind 'request' cannot carry a status")
    else:
        raise _malformed("message has neither an operation nor a status")

    op = None
    if op_raw is not None:
        try:
            op = Op(op_raw)
        except ValueError:
            raise _malformed(f"unknown operation {op_raw!r}") from None

    status = None
    if status_raw is not None:
        try:
            status = Status(status_raw)
        except ValueError:
            raise _malformed(f"unknown status {status_raw!r}") from None

    seq = obj.get("seq")
    if seq is not None and (not isinstance(seq, int) or isinstance(seq, bool)):
        raise _malformed("seq must be an integer")

    error = None
    if "error" in obj:
        error = ErrorDetail.from_wire(obj["error"])

    body = obj.get("body")
    enc = _string_field(obj, "enc")
    if enc is not None:
        if enc != BODY_ENC_DEFLATE:
            raise _malformed(f"unknown body encoding {enc!r}")
        if not isinstance(body, str):
            raise _malformed("compressed body must be a base64 string")
        try:
            raw = decompress_body(base64.b64decode(body, validate=True))
            body = json.loads(raw.decode("utf-8"))
        except (binascii.Error, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise _malformed(f"cannot decode compressed body: {exc}") from exc
        enc = None

    env = Envelope(
        kind=kind,
        op=op,
        path=_string_field(obj, "path"),
        id=_string_field(obj, "id"),
        timestamp=_string_field(obj, "timestamp"),
        body=body,
        status=status,
        error=error,
        auth=_string_field(obj, "auth"),
        seq=seq,
        enc=enc,
        protocol_version=PROTOCOL_VERSION,
        extra={k: v for k, v in obj.items() if k not in _WIRE_ORDER},
    )
    problem = _invariant_problem(env)
    if problem is not None:
        raise _malformed(problem)
    return env


def decode_envelope(data: bytes | str) -> Envelope:
    """Parse and structurally validate one serialized envelope.

    Raises ProtocolError(MALFORMED) for anything that must be rejected
    before dispatch; payload schema checking is the schema module's job.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise _malformed(f"not valid UTF-8: {exc}") from exc
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise _malformed(f"not valid JSON: {exc}") from exc
    return envelope_from_wire(obj)


# --- segmentation -----------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    """One chunk of an oversized serialized envelope."""

    segment_id: str
    index: int
    count: int
    payload: str  # base64 of the raw chunk

    def to_wire(self) -> dict[str, Any]:
        return {"segment_id": self.segment_id, "index": self.index,
                "count": self.count, "payload": self.payload}

    @staticmethod
    def from_wire(obj: Any) -> "Segment":
        if not isinstance(obj, dict):
            raise _malformed("segment must be a JSON object")
        try:
            segment_id = obj["segment_id"]
            index = obj["index"]
            count = obj["count"]
            payload = obj["payload"]
        except KeyError as exc:
            raise _malformed(f"segment missing field {exc}") from exc
        if not isinstance(segment_id, str) or not isinstance(payload, str):
            raise _malformed("segment_id and payload must be strings")
        if not isinstance(index, int) or not isinstance(count, int) or isinstance(index, bool) or isinstance(count, bool):
            raise _malformed("segment index/count must be integers")
        if count < 1 or index < 0 or index >= count:
            raise _malformed(f"segment index {index} out of range for count {count}")
        return Segment(segment_id, index, count, payload)


def segment_payload(data: bytes, chunk_size: int) -> list[Segment]:
    """Split raw bytes into ordered base64 segments of at most chunk_size."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    # max(1, ...) keeps the empty payload representable as a single segment
    count = max(1, math.ceil(len(data) / chunk_size))
    segment_id = new_id()
    return [
        Segment(
            segment_id=segment_id,
            index=i,
            count=count,
            payload=base64.b64encode(data[i * chunk_size:(i + 1) * chunk_size]).decode("ascii"),
        )
        for i in range(count)
    ]


def reassemble(segments: list[Segment]) -> bytes:
    """Rebuild the original bytes from segments in any arrival order."""
    if not segments:
        raise _malformed("no segments to reassemble")
    segment_id = segments[0].segment_id
    count = segments[0].count
    for seg in segments:
        if seg.segment_id != segment_id:
            raise _malformed("segments from different messages cannot be mixed")
        if seg.count != count:
            raise _malformed("segments disagree on count")
    indices = sorted(seg.index for seg in segments)
    if indices != list(range(count)):
        raise _malformed(f"segment indices {indices} do not cover 0..{count - 1}")
    ordered = sorted(segments, key=lambda seg: seg.index)
    try:
        return b"".join(base64.b64decode(seg.payload, validate=True) for seg in ordered)
    except binascii.Error as exc:
        raise _malformed(f"segment payload is not valid base64: {exc}") from exc


def decode_frame(data: bytes | str) -> Envelope | Segment:
    """Decode one streaming-transport frame: an envelope or a segment."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise _malformed(f"not valid UTF-8: {exc}") from exc
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise _malformed(f"not valid JSON: {exc}") from exc
    if isinstance(obj, dict) and "segment_id" in obj:
        return Segment.from_wire(obj)
    return envelope_from_wire(obj)


# --- compression ------------------------------------------------------------

def compress_body(data: bytes) -> bytes:
    return zlib.compress(data)


def decompress_body(data: bytes) -> bytes:
    try:
        return zlib.decompress(data)
    except zlib.error as exc:
        raise _malformed(f"corrupt compressed data: {exc}") from exc


def compress_envelope_body(env: Envelope) -> Envelope:
    """Return a copy whose body is deflate+base64 armored (no-op if bodyless).

    decode_envelope undoes this transparently, so compression is invisible
    above the wire layer.
    """
    if env.body is None or env.enc is not None:
        return env
    raw = json.dumps(env.body, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    packed = base64.b64encode(compress_body(raw)).decode("ascii")
    return replace(env, body=packed, enc=BODY_ENC_DEFLATE)
