"""Request dispatch, the asynchronous command state machine, subscriptions.

Command records move accepted -> in_progress -> completed/failed, or
accepted -> rejected; terminal states are immutable and CONFLICT is raised
on any other transition. A rejected request (duplicate action, backend not
connected) gets a record created directly in the rejected state, so the
``accepted`` counter never includes rejections.

A single re-entrant lock serializes every state mutation; event delivery
is a synchronous enqueue on the receiving session, so no callback ever
runs under the lock for long.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, replace
from typing import Any, Callable, Protocol

from .registry import Registry, ResourceDescriptor, ResourcePath, parse_path
from .schema import validate
from .security import Principal, PolicyStore
from .status import HealthMonitor
from .wire import (
    Envelope,
    ErrorCode,
    ErrorDetail,
    Kind,
    Op,
    ProtocolError,
    Status,
    iso_now,
    new_id,
)

TERMINAL_STATES = frozenset({Status.COMPLETED, Status.FAILED, Status.REJECTED})

#: in_progress -> in_progress is a progress update, not a transition;
#: terminal states allow nothing.
_LEGAL_TRANSITIONS: dict[Status, frozenset[Status]] = {
    Status.ACCEPTED: frozenset({Status.IN_PROGRESS, Status.REJECTED}),
    Status.IN_PROGRESS: frozenset({Status.IN_PROGRESS, Status.COMPLETED, Status.FAILED}),
}

#: Error codes that describe a domain failure rather than a protocol fault;
#: responses carrying them use status "failed" instead of "error".
_FAILURE_CODES = frozenset({ErrorCode.OUT_OF_RANGE, ErrorCode.BACKEND_UNAVAILABLE})

DEFAULT_COMMAND_TTL_S = 600.0


class EventSink(Protocol):
    """What lifecycle needs from a transport session to deliver events."""

    channel: str

    def deliver(self, env: Envelope, *, droppable: bool, sub_id: str | None) -> None: ...


@dataclass
class CommandRecord:
    id: str
    path: str  # canonical form
    state: Status
    submitted_at: str
    updated_at: str
    progress: float | None = None
    result: Any = None
    error: ErrorDetail | None = None
    message: str | None = None
    terminal_at: float | None = None  # monotonic, for TTL eviction

    def to_wire(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": self.id,
            "path": self.path,
            "state": self.state.value,
            "submitted_at": self.submitted_at,
            "updated_at": self.updated_at,
        }
        if self.progress is not None:
            out["progress"] = self.progress
        if self.result is not None:
            out["result"] = self.result
        if self.error is not None:
            out["error"] = self.error.to_wire()
        if self.message is not None:
            out["message"] = self.message
        return out


@dataclass
class Subscription:
    sub_id: str
    path: str  # canonical form
    session: EventSink
    next_seq: int = 0
    filter: Any = None


class CommandHandle:
    """Feedback sink handed to adapters for one accepted command."""

    def __init__(self, dispatcher: "Dispatcher", command_id: str):
        self._dispatcher = dispatcher
        self.id = command_id

    def in_progress(self, progress: float, message: str | None = None) -> None:
        self._dispatcher.advance(self.id, Status.IN_PROGRESS, progress=progress, message=message)

    def completed(self, result: Any = None, message: str | None = None,
                  progress: float | None = None) -> None:
        self._dispatcher.advance(self.id, Status.COMPLETED, result=result,
                                 message=message, progress=progress)

    def failed(self, error: ErrorDetail) -> None:
        self._dispatcher.advance(self.id, Status.FAILED, error=error, message=error.message)

    def state(self) -> Status:
        return self._dispatcher.query_command(self.id).state


class AdapterProtocol(Protocol):
    """Backend contract; see rcp.adapter for the authoring guide."""

    name: str
    display_name: str

    def declare_resources(self) -> list[ResourceDescriptor]: ...
    def handle_read(self, path: ResourcePath) -> Any: ...
    def handle_write(self, path: ResourcePath, value: Any) -> Any: ...
    def handle_execute(self, path: ResourcePath, args: Any, feedback: CommandHandle) -> None: ...
    def readiness(self) -> tuple[bool, str]: ...


class Dispatcher:
    """Routes request envelopes to adapters and drives command lifecycles."""

    def __init__(self, registry: Registry, policies: PolicyStore,
                 monitor: HealthMonitor,
                 command_ttl_s: float = DEFAULT_COMMAND_TTL_S,
                 clock: Callable[[], float] = time.monotonic):
        self._lock = threading.RLock()
        self.registry = registry
        self.policies = policies
        self.monitor = monitor
        self._handlers: dict[str, AdapterProtocol] = {}
        self._commands: dict[str, CommandRecord] = {}
        self._in_flight: dict[str, str] = {}  # canonical path -> command id
        self._origin_session: dict[str, EventSink] = {}
        self._subs: dict[str, Subscription] = {}
        self._subs_by_path: dict[str, dict[str, Subscription]] = {}
        self._ttl = command_ttl_s
        self._clock = clock

    # --- registration -------------------------------------------------------

    def mount(self, adapter: AdapterProtocol, tenant: str | None = None) -> None:
        """Register every resource an adapter declares, optionally under a
        tenant namespace, and hand the adapter its backend context."""
        for descriptor in adapter.declare_resources():
            if tenant is not None:
                descriptor = replace(descriptor, path=descriptor.path.with_tenant(tenant))
            self.registry.register(descriptor)
            self._handlers[str(descriptor.path)] = adapter
        if hasattr(adapter, "attach"):
            from .adapter import BackendContext  # deferred: adapter imports us
            adapter.attach(BackendContext(tenant=tenant, publish_fn=self.publish,
                                          log_fn=self.monitor.record_log))

    def adapter_for(self, canonical: str) -> AdapterProtocol:
        try:
            return self._handlers[canonical]
        except KeyError:
            raise ProtocolError(ErrorCode.BACKEND_UNAVAILABLE,
                                f"no backend handles {canonical}", "lifecycle") from None

    # --- dispatch -----------------------------------------------------------

    def dispatch(self, env: Envelope, principal: Principal,
                 session: EventSink | None = None, *,
                 deliver: bool = False,
                 response_extra: dict[str, Any] | None = None) -> Envelope:
        """Handle one request envelope and build its response.

        With deliver=True (streaming channels) the response is enqueued on
        the session here, before any command feedback the execute handler
        produced, so clients always observe accepted first.
        """
        if env.kind is not Kind.REQUEST:
            raise ProtocolError(ErrorCode.INTERNAL, "dispatch requires a request envelope", "lifecycle")
        request_id = env.id or new_id()
        origin: EventSink | None = session
        buffer: _BufferedOrigin | None = None
        if deliver and session is not None and env.op is Op.EXECUTE:
            origin = buffer = _BufferedOrigin(session)
        try:
            body = self._dispatch_op(env, request_id, principal, origin)
            status = Status.ACCEPTED if env.op is Op.EXECUTE else Status.OK
            response = Envelope.response(status, id=request_id, path=env.path, body=body)
        except _Rejection as rej:
            if not rej.recorded:  # adapter-raised rejections were counted by advance()
                self.monitor.count_command("rejected")
                self._record_rejection(request_id, rej)
            response = Envelope.response(Status.REJECTED, id=request_id, path=env.path,
                                         body={"command_id": request_id}, error=rej.detail)
        except ProtocolError as exc:
            status = Status.FAILED if exc.code in _FAILURE_CODES else Status.ERROR
            response = Envelope.response(status, id=request_id, path=env.path, error=exc.detail)
        if response_extra:
            response.extra.update(response_extra)
        if deliver and session is not None:
            session.deliver(response, droppable=False, sub_id=None)
        if buffer is not None:
            buffer.flush()
            with self._lock:  # future feedback goes straight to the session
                if self._origin_session.get(request_id) is buffer:
                    self._origin_session[request_id] = session
        return response

    def _dispatch_op(self, env: Envelope, request_id: str, principal: Principal,
                     session: EventSink | None) -> Any:
        op = env.op
        assert op is not None
        if op is Op.READ:
            return self._do_read(env, principal)
        if op is Op.WRITE:
            return self._do_write(env, principal)
        if op is Op.EXECUTE:
            return self._do_execute(env, request_id, principal, session)
        if op is Op.SUBSCRIBE:
            return self._do_subscribe(env, principal, session)
        if op is Op.UNSUBSCRIBE:
            return self._do_unsubscribe(env, session)
        if op is Op.DISCOVER:
            return self._do_discover(env, principal)
        if op is Op.STATUS:
            return self._do_status(principal)
        raise ProtocolError(ErrorCode.OP_NOT_SUPPORTED, f"unhandled op {op.value}", "lifecycle")

    def _resolve(self, env: Envelope, principal: Principal, op: Op) -> tuple[ResourcePath, str, ResourceDescriptor]:
        # authorization happens on the canonical path before resolution, so
        # callers cannot probe for the existence of foreign resources
        path = parse_path(env.path or "")
        canonical = str(path)
        self.policies.authorize(principal, canonical, op)
        descriptor = self.registry.resolve(canonical, op)
        return path, canonical, descriptor

    def _do_read(self, env: Envelope, principal: Principal) -> Any:
        path, canonical, descriptor = self._resolve(env, principal, Op.READ)
        payload = self.adapter_for(canonical).handle_read(path)
        if descriptor.output_schema is not None:
            report = validate(payload, descriptor.output_schema)
            if not report.valid:
                raise ProtocolError(ErrorCode.INTERNAL,
                                    f"backend produced non-conforming payload: {report.describe()}",
                                    "adapter")
        return payload

    def _do_write(self, env: Envelope, principal: Principal) -> Any:
        path, canonical, descriptor = self._resolve(env, principal, Op.WRITE)
        if descriptor.input_schema is not None:
            report = validate(env.body, descriptor.input_schema)
            if not report.valid:
                raise ProtocolError(ErrorCode.SCHEMA_VIOLATION,
                                    f"write to {canonical} rejected: {report.describe()}",
                                    "schema")
        ack = self.adapter_for(canonical).handle_write(path, env.body)
        return {"applied": True, "value": ack if ack is not None else env.body}

    def _do_execute(self, env: Envelope, request_id: str, principal: Principal,
                    session: EventSink | None) -> Any:
        path, canonical, descriptor = self._resolve(env, principal, Op.EXECUTE)
        args = env.body if env.body is not None else {}
        assert descriptor.input_schema is not None  # enforced at registration
        report = validate(args, descriptor.input_schema)
        if not report.valid:
            raise ProtocolError(ErrorCode.SCHEMA_VIOLATION,
                                f"execute args for {canonical} rejected: {report.describe()}",
                                "schema")
        adapter = self.adapter_for(canonical)
        with self._lock:
            self._purge()
            if request_id in self._commands:
                raise ProtocolError(ErrorCode.CONFLICT,
                                    f"command id {request_id!r} already used", "lifecycle")
            in_flight = self._in_flight.get(canonical)
            if in_flight is not None:
                raise _Rejection(ErrorDetail(
                    ErrorCode.CONFLICT,
                    f"Warning: action '{canonical}' is currently in progress; "
                    "rejecting duplicate request.",
                    "lifecycle",
                    remediation=f"wait for command {in_flight} to finish",
                ), path=canonical)
            ready, detail = adapter.readiness()
            if not ready:
                raise _Rejection(ErrorDetail(
                    ErrorCode.BACKEND_UNAVAILABLE,
                    f"Command rejected --- {adapter.display_name} adapter is not "
                    "connected to the runtime.",
                    "adapter",
                    remediation=detail,
                ), path=canonical)
            now = iso_now()
            record = CommandRecord(id=request_id, path=canonical, state=Status.ACCEPTED,
                                   submitted_at=now, updated_at=now)
            self._commands[request_id] = record
            self._in_flight[canonical] = request_id
            if session is not None:
                self._origin_session[request_id] = session
            self.monitor.count_command("accepted")
        try:
            adapter.handle_execute(path, args, CommandHandle(self, request_id))
        except ProtocolError as exc:
            self.advance(request_id, Status.REJECTED, error=exc.detail)
            raise _Rejection(exc.detail, path=canonical, recorded=True) from exc
        return {"command_id": request_id}

    def _do_subscribe(self, env: Envelope, principal: Principal,
                      session: EventSink | None) -> Any:
        # authorize before the channel complaint: a caller without the grant
        # learns nothing about how the path could be used
        canonical = str(parse_path(env.path or ""))
        self.policies.authorize(principal, canonical, Op.SUBSCRIBE)
        if session is None or session.channel == "http":
            raise ProtocolError(ErrorCode.OP_NOT_SUPPORTED,
                                "subscribe requires a streaming channel (websocket or sse)",
                                "lifecycle",
                                remediation="connect via /rcp/ws or /rcp/stream")
        self.registry.resolve(canonical, Op.SUBSCRIBE)
        sub = self.subscribe(canonical, session, filter=env.body)
        return {"sub_id": sub.sub_id, "path": canonical}

    def _do_unsubscribe(self, env: Envelope, session: EventSink | None) -> Any:
        sub_id = (env.body or {}).get("sub_id") if isinstance(env.body, dict) else None
        if not isinstance(sub_id, str):
            raise ProtocolError(ErrorCode.MALFORMED,
                                "unsubscribe requires body {\"sub_id\": ...}", "lifecycle")
        if not self.unsubscribe(sub_id, session):
            raise ProtocolError(ErrorCode.UNKNOWN_PATH,
                                f"unknown subscription {sub_id!r}", "lifecycle")
        return {"unsubscribed": sub_id}

    def _do_discover(self, env: Envelope, principal: Principal) -> Any:
        if not principal.holds_grant(Op.DISCOVER):
            raise ProtocolError(ErrorCode.FORBIDDEN,
                                f"{principal.name} holds no discover grant", "security")
        scope = None
        if env.path is not None:
            tokens = [t for t in env.path.split("/") if t]
            if len(tokens) != 2 or tokens[0] != "tenant":
                raise ProtocolError(ErrorCode.MALFORMED,
                                    "discover scope must look like /tenant/<name>", "lifecycle")
            scope = tokens[1]
            if not principal.may_scope(scope):
                raise ProtocolError(ErrorCode.FORBIDDEN,
                                    f"{principal.name} may not discover tenant {scope!r}",
                                    "security")
        catalog = self.registry.discover(scope=scope, visible=principal.can_see)
        return catalog.to_wire()

    def _do_status(self, principal: Principal) -> Any:
        if not principal.holds_grant(Op.STATUS):
            raise ProtocolError(ErrorCode.FORBIDDEN,
                                f"{principal.name} holds no status grant", "security")
        return self.monitor.snapshot()

    # --- command state machine ----------------------------------------------

    def advance(self, command_id: str, new_state: Status, *,
                progress: float | None = None, result: Any = None,
                error: ErrorDetail | None = None, message: str | None = None) -> None:
        """Adapter-driven state transition; emits feedback to the originating
        session and to subscribers of the command's path."""
        with self._lock:
            record = self._commands.get(command_id)
            if record is None:
                raise ProtocolError(ErrorCode.UNKNOWN_PATH,
                                    f"unknown command {command_id!r}", "lifecycle")
            allowed = _LEGAL_TRANSITIONS.get(record.state, frozenset())
            if new_state not in allowed:
                raise ProtocolError(
                    ErrorCode.CONFLICT,
                    f"illegal transition {record.state.value} -> {new_state.value} "
                    f"for command {command_id}",
                    "lifecycle",
                )
            entered = record.state is not new_state
            record.state = new_state
            record.updated_at = iso_now()
            if progress is not None:
                record.progress = progress
            if result is not None:
                record.result = result
            if error is not None:
                record.error = error
            if message is not None:
                record.message = message
            if new_state in TERMINAL_STATES:
                record.terminal_at = self._clock()
                if self._in_flight.get(record.path) == command_id:
                    del self._in_flight[record.path]
            if entered:  # counters track state entries, not progress updates
                self.monitor.count_command(new_state.value)
            origin = self._origin_session.get(command_id)
            if new_state in TERMINAL_STATES:
                self._origin_session.pop(command_id, None)
            body: dict[str, Any] = {"command_id": command_id, "state": new_state.value}
            if record.progress is not None:
                body["progress"] = record.progress
            if result is not None:
                body["result"] = result
            if message is not None:
                body["message"] = message
            event = Envelope.event(new_state, path=record.path, id=command_id,
                                   body=body, error=error)
            # feedback is never droppable: backpressure sheds telemetry only.
            # delivered under the lock so event order matches transition order.
            if origin is not None:
                origin.deliver(event, droppable=False, sub_id=None)
            self._fan_out(record.path, event, droppable=False)

    def query_command(self, command_id: str) -> CommandRecord:
        with self._lock:
            self._purge()
            record = self._commands.get(command_id)
            if record is None:
                raise ProtocolError(ErrorCode.UNKNOWN_PATH,
                                    f"unknown command {command_id!r}", "lifecycle")
            return record

    def _record_rejection(self, request_id: str, rej: "_Rejection") -> None:
        if rej.recorded:
            return
        now = iso_now()
        with self._lock:
            self._commands[request_id] = CommandRecord(
                id=request_id, path=rej.path, state=Status.REJECTED,
                submitted_at=now, updated_at=now, error=rej.detail,
                message=rej.detail.message, terminal_at=self._clock(),
            )

    def _purge(self) -> None:
        # caller holds the lock
        deadline = self._clock() - self._ttl
        expired = [cid for cid, rec in self._commands.items()
                   if rec.terminal_at is not None and rec.terminal_at < deadline]
        for cid in expired:
            del self._commands[cid]

    # --- subscriptions and event fan-out --------------------------------------

    def subscribe(self, canonical: str, session: EventSink, filter: Any = None) -> Subscription:
        sub = Subscription(sub_id=new_id(), path=canonical, session=session, filter=filter)
        with self._lock:
            self._subs[sub.sub_id] = sub
            self._subs_by_path.setdefault(canonical, {})[sub.sub_id] = sub
        return sub

    def unsubscribe(self, sub_id: str, session: EventSink | None = None) -> bool:
        with self._lock:
            sub = self._subs.get(sub_id)
            if sub is None or (session is not None and sub.session is not session):
                return False
            del self._subs[sub_id]
            self._subs_by_path[sub.path].pop(sub_id, None)
        return True

    def drop_session(self, session: EventSink) -> None:
        """Release everything a dying session owns."""
        with self._lock:
            dead = [sid for sid, sub in self._subs.items() if sub.session is session]
            for sid in dead:
                sub = self._subs.pop(sid)
                self._subs_by_path[sub.path].pop(sid, None)
            orphaned = [cid for cid, sess in self._origin_session.items() if sess is session]
            for cid in orphaned:
                del self._origin_session[cid]

    def publish(self, path: ResourcePath | str, payload: Any) -> None:
        """Adapter-side event injection; telemetry events are droppable."""
        canonical = str(path)
        descriptor = self.registry.get(canonical)
        if descriptor is None or Op.SUBSCRIBE not in descriptor.supported_ops:
            raise ProtocolError(ErrorCode.UNKNOWN_PATH,
                                f"{canonical} is not a subscribable resource", "lifecycle")
        if descriptor.output_schema is not None:
            report = validate(payload, descriptor.output_schema)
            if not report.valid:
                self.monitor.record_log(
                    "error",
                    f"dropped event on {canonical}: {report.describe()}",
                    origin="lifecycle",
                )
                return
        event = Envelope.event(Status.OK, path=canonical, body=payload)
        self._fan_out(canonical, event, droppable=True)

    def _fan_out(self, canonical: str, event: Envelope, *, droppable: bool) -> None:
        # seq stamping and delivery share the lock so per-subscription seq
        # order equals delivery order under concurrent publishers
        with self._lock:
            for sub in list(self._subs_by_path.get(canonical, {}).values()):
                stamped = replace(event, seq=sub.next_seq)
                sub.next_seq += 1
                sub.session.deliver(stamped, droppable=droppable, sub_id=sub.sub_id)


class _Rejection(Exception):
    """Internal: an execute refused before entering the accepted state."""

    def __init__(self, detail: ErrorDetail, path: str, recorded: bool = False):
        super().__init__(detail.message)
        self.detail = detail
        self.path = path
        self.recorded = recorded


class _BufferedOrigin:
    """Holds feedback emitted while an execute is still being dispatched,
    so nothing outruns the accepted response on the originating session."""

    channel = "buffer"

    def __init__(self, session: EventSink):
        self.session = session
        self._held: list[tuple[Envelope, bool, str | None]] = []
        self._buffering = True

    def deliver(self, env: Envelope, *, droppable: bool, sub_id: str | None) -> None:
        if self._buffering:
            self._held.append((env, droppable, sub_id))
        else:
            self.session.deliver(env, droppable=droppable, sub_id=sub_id)

    def flush(self) -> None:
        self._buffering = False
        held, self._held = self._held, []
        for env, droppable, sub_id in held:
            self.session.deliver(env, droppable=droppable, sub_id=sub_id)
