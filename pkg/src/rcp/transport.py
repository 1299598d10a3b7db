"""Tri-channel transport: HTTP request/response, WebSocket, SSE push.

All three channels funnel through Dispatcher.dispatch, so authentication
and authorization happen at one checkpoint regardless of how a message
arrived. Outbound frames on streaming channels are segmented above the
configured threshold; per-session compression is negotiated by the first
envelope carrying ``accept_enc: ["deflate"]``.

Backpressure: each streaming session owns a bounded outbound queue.
On overflow the oldest droppable (telemetry) item is evicted, never
command feedback, and the next delivery on the starved subscription is
preceded by an events_dropped notice so clients can tell a sanctioned
seq gap from a broken one.
"""

from __future__ import annotations

import asyncio
import json
import time
import zlib
from collections import deque
from dataclasses import dataclass
from typing import Any, AsyncIterator, Callable

from fastapi import FastAPI, Request, Response, WebSocket
from starlette.responses import StreamingResponse

from .gateway import Gateway
from .lifecycle import Dispatcher
from .security import Principal
from .wire import (
    Envelope,
    ErrorCode,
    Kind,
    Op,
    ProtocolError,
    Segment,
    Status,
    compress_envelope_body,
    decode_frame,
    encode_envelope,
    iso_now,
    new_id,
    reassemble,
    segment_payload,
)

WS_SUBPROTOCOL = "rcp.v1"

#: Envelope-level error -> HTTP status code.
HTTP_CODE = {
    ErrorCode.MALFORMED: 400,
    ErrorCode.SCHEMA_VIOLATION: 400,
    ErrorCode.UNAUTHORIZED: 401,
    ErrorCode.FORBIDDEN: 403,
    ErrorCode.UNKNOWN_PATH: 404,
    ErrorCode.OP_NOT_SUPPORTED: 405,
    ErrorCode.CONFLICT: 409,
    ErrorCode.OUT_OF_RANGE: 422,
    ErrorCode.BACKEND_UNAVAILABLE: 503,
    ErrorCode.INTERNAL: 500,
}

MAX_CONSECUTIVE_MALFORMED = 3


def http_code_for(env: Envelope) -> int:
    if env.error is not None:
        return HTTP_CODE[env.error.code]
    if env.status is Status.ACCEPTED:
        return 202
    return 200


@dataclass
class QueueItem:
    env: Envelope
    droppable: bool
    sub_id: str | None


class Session:
    """One streaming client: principal, outbound queue, replay buffer.

    deliver() and the queue bookkeeping must run on the gateway loop;
    HTTP requests are served without a Session at all.
    """

    def __init__(self, session_id: str, principal: Principal, channel: str,
                 bound: int, replay_size: int, on_drop: Callable[[int], None]):
        self.session_id = session_id
        self.principal = principal
        self.channel = channel
        self.created_at = iso_now()
        self.last_seen = self.created_at
        self.compression_enabled = False
        self.connected = True
        self.disconnected_at: float | None = None
        self.bound = bound
        self.drops = 0
        self._on_drop = on_drop
        self._queue: deque[QueueItem] = deque()
        self._pending_drops: dict[str, int] = {}
        self._replay: deque[Envelope] = deque(maxlen=replay_size)
        self._wake = asyncio.Event()

    def touch(self) -> None:
        self.last_seen = iso_now()

    @property
    def queue_depth(self) -> int:
        return len(self._queue)

    # --- producer side ---------------------------------------------------------

    def deliver(self, env: Envelope, *, droppable: bool, sub_id: str | None) -> None:
        if len(self._queue) >= self.bound:
            victim_at = next((i for i, item in enumerate(self._queue) if item.droppable), None)
            if victim_at is not None:
                victim = self._queue[victim_at]
                del self._queue[victim_at]
                self._note_drop(victim.sub_id)
            elif droppable:
                # queue is all feedback; shed the newcomer instead
                self._note_drop(sub_id)
                return
            # undroppable feedback may transiently exceed the bound
        self._queue.append(QueueItem(env, droppable, sub_id))
        self._wake.set()

    def _note_drop(self, sub_id: str | None) -> None:
        self.drops += 1
        self._on_drop(1)
        if sub_id is not None:
            self._pending_drops[sub_id] = self._pending_drops.get(sub_id, 0) + 1

    # --- consumer side -----------------------------------------------------------

    def _pop(self) -> QueueItem | None:
        if not self._queue:
            return None
        head = self._queue[0]
        if head.sub_id is not None and self._pending_drops.get(head.sub_id):
            # announce the gap before anything newer for that subscription
            dropped = self._pending_drops.pop(head.sub_id)
            notice = Envelope.event(Status.OK, path=head.env.path, body={
                "notice": "events_dropped",
                "sub_id": head.sub_id,
                "dropped": dropped,
            })
            return QueueItem(notice, False, head.sub_id)
        self._queue.popleft()
        if head.env.seq is not None:
            self._replay.append(head.env)
        return head

    async def next_item(self, timeout: float | None = None) -> QueueItem | None:
        """Next outbound item, or None when `timeout` elapses (heartbeat)."""
        while True:
            item = self._pop()
            if item is not None:
                return item
            self._wake.clear()
            try:
                await asyncio.wait_for(self._wake.wait(), timeout)
            except asyncio.TimeoutError:
                return None

    def requeue_front(self, item: QueueItem) -> None:
        self._queue.appendleft(item)
        self._wake.set()

    def replay_since(self, last_seq: int) -> list[Envelope]:
        return [env for env in self._replay if env.seq is not None and env.seq > last_seq]


class SessionManager:
    def __init__(self, bound: int, grace_s: float, replay_size: int,
                 on_drop: Callable[[int], None],
                 clock: Callable[[], float] = time.monotonic):
        self._sessions: dict[str, Session] = {}
        self._bound = bound
        self._grace = grace_s
        self._replay_size = replay_size
        self._on_drop = on_drop
        self._clock = clock

    def create(self, principal: Principal, channel: str) -> Session:
        session = Session(new_id(), principal, channel, self._bound,
                          self._replay_size, self._on_drop)
        self._sessions[session.session_id] = session
        return session

    def resume(self, session_id: str, principal: Principal) -> Session | None:
        session = self._sessions.get(session_id)
        if session is None or session.connected:
            return None
        if session.principal.name != principal.name:
            return None
        if (self._clock() - (session.disconnected_at or 0.0)) > self._grace:
            return None
        session.connected = True
        session.disconnected_at = None
        session.touch()
        return session

    def disconnect(self, session: Session) -> None:
        session.connected = False
        session.disconnected_at = self._clock()

    def sweep(self, release: Callable[[Session], None]) -> None:
        deadline = self._clock() - self._grace
        expired = [s for s in self._sessions.values()
                   if not s.connected and (s.disconnected_at or 0.0) < deadline]
        for session in expired:
            del self._sessions[session.session_id]
            release(session)

    def stats(self) -> dict[str, int]:
        live = [s for s in self._sessions.values()]
        return {
            "sessions_active": sum(1 for s in live if s.connected),
            "max_depth": max((s.queue_depth for s in live), default=0),
            "sessions_at_bound": sum(1 for s in live if s.queue_depth >= s.bound),
        }


# --- frame helpers -----------------------------------------------------------------

def outbound_frames(env: Envelope, session: Session, threshold: int) -> list[str]:
    if session.compression_enabled:
        env = compress_envelope_body(env)
    raw = encode_envelope(env)
    if len(raw) <= threshold:
        return [raw.decode("utf-8")]
    return [json.dumps(seg.to_wire(), separators=(",", ":"))
            for seg in segment_payload(raw, threshold)]


class Reassembler:
    """Collects inbound segments until a full envelope can be decoded."""

    def __init__(self):
        self._partial: dict[str, list[Segment]] = {}

    def feed(self, segment: Segment) -> Envelope | None:
        parts = self._partial.setdefault(segment.segment_id, [])
        parts.append(segment)
        if len(parts) < segment.count:
            return None
        del self._partial[segment.segment_id]
        return_env = decode_frame(reassemble(parts))
        if isinstance(return_env, Segment):
            raise ProtocolError(ErrorCode.MALFORMED,
                                "segments must reassemble into an envelope", "transport")
        return return_env


def error_envelope(exc: ProtocolError, request_id: str | None = None) -> Envelope:
    status = Status.ERROR
    if exc.code in (ErrorCode.OUT_OF_RANGE, ErrorCode.BACKEND_UNAVAILABLE):
        status = Status.FAILED
    return Envelope.response(status, id=request_id or new_id(), error=exc.detail)


# --- app ---------------------------------------------------------------------------

def build_app(gateway: Gateway) -> FastAPI:
    cfg = gateway.config
    dispatcher: Dispatcher = gateway.dispatcher
    sessions = SessionManager(cfg.queue_bound, cfg.grace_window_s,
                              cfg.replay_buffer_size, gateway.monitor.count_drop)
    gateway.sessions = sessions
    gateway.monitor.session_probe = sessions.stats

    app = FastAPI(title="rcp-gateway", lifespan=gateway.lifespan, docs_url=None,
                  redoc_url=None)

    def authenticate(token: str | None) -> Principal:
        return gateway.policies.authenticate(token)

    def bearer_from(request: Request) -> str | None:
        header = request.headers.get("authorization", "")
        if header.lower().startswith("bearer "):
            return header[7:]
        return request.query_params.get("token")

    def json_response(payload: Any, code: int = 200) -> Response:
        return Response(json.dumps(payload, ensure_ascii=False, separators=(",", ":")),
                        status_code=code, media_type="application/json")

    def error_json(exc: ProtocolError) -> Response:
        return json_response({"error": exc.detail.to_wire()}, HTTP_CODE[exc.code])

    def envelope_response(env: Envelope, request: Request) -> Response:
        raw = encode_envelope(env)
        headers = {}
        if "deflate" in request.headers.get("accept-encoding", "").lower():
            raw = zlib.compress(raw)
            headers["Content-Encoding"] = "deflate"
        return Response(raw, status_code=http_code_for(env),
                        media_type="application/json", headers=headers)

    # --- HTTP --------------------------------------------------------------------

    @app.post("/rcp")
    async def rcp_endpoint(request: Request) -> Response:
        raw = await request.body()
        try:
            env = decode_frame(raw)
            if isinstance(env, Segment):
                raise ProtocolError(ErrorCode.MALFORMED,
                                    "segmented requests belong on streaming channels",
                                    "transport")
            if env.kind is not Kind.REQUEST:
                raise ProtocolError(ErrorCode.MALFORMED,
                                    "only request envelopes may be POSTed", "transport")
            principal = authenticate(env.auth or bearer_from(request))
        except ProtocolError as exc:
            return envelope_response(error_envelope(exc), request)
        response = dispatcher.dispatch(env, principal, session=None)
        return envelope_response(response, request)

    @app.get("/rcp/discovery")
    async def discovery_endpoint(request: Request) -> Response:
        try:
            principal = authenticate(bearer_from(request))
            tenant = request.query_params.get("tenant")
            env = Envelope.request(Op.DISCOVER,
                                   path=f"/tenant/{tenant}" if tenant else None)
            response = dispatcher.dispatch(env, principal, session=None)
            if response.error is not None:
                raise ProtocolError(response.error.code, response.error.message,
                                    response.error.origin, response.error.remediation)
            return json_response(response.body)
        except ProtocolError as exc:
            return error_json(exc)

    @app.get("/rcp/status")
    async def status_endpoint(request: Request) -> Response:
        try:
            principal = authenticate(bearer_from(request))
            env = Envelope.request(Op.STATUS)
            response = dispatcher.dispatch(env, principal, session=None)
            if response.error is not None:
                raise ProtocolError(response.error.code, response.error.message,
                                    response.error.origin, response.error.remediation)
            return json_response(response.body)
        except ProtocolError as exc:
            return error_json(exc)

    @app.get("/rcp/commands/{command_id}")
    async def command_endpoint(command_id: str, request: Request) -> Response:
        try:
            principal = authenticate(bearer_from(request))
            record = dispatcher.query_command(command_id)
            if not principal.can_see(record.path):
                raise ProtocolError(ErrorCode.FORBIDDEN,
                                    f"{principal.name} may not view commands on {record.path}",
                                    "security")
            return json_response(record.to_wire())
        except ProtocolError as exc:
            return error_json(exc)

    # --- WebSocket ------------------------------------------------------------------

    @app.websocket("/rcp/ws")
    async def ws_endpoint(ws: WebSocket) -> None:
        offered = ws.scope.get("subprotocols") or []
        await ws.accept(subprotocol=WS_SUBPROTOCOL if WS_SUBPROTOCOL in offered else None)
        session: Session | None = None
        sender: asyncio.Task | None = None
        reassembler = Reassembler()
        malformed_streak = 0

        async def send_direct(env: Envelope) -> None:
            threshold = cfg.segment_threshold
            frames = outbound_frames(env, session, threshold) if session else \
                [encode_envelope(env).decode("utf-8")]
            for frame in frames:
                await ws.send_text(frame)

        async def sender_loop(sess: Session) -> None:
            while True:
                item = await sess.next_item()
                assert item is not None
                try:
                    for frame in outbound_frames(item.env, sess, cfg.segment_threshold):
                        await ws.send_text(frame)
                except Exception:
                    sess.requeue_front(item)
                    raise

        try:
            while True:
                message = await ws.receive()
                if message["type"] == "websocket.disconnect":
                    break
                if message.get("text") is None:
                    malformed_streak += 1
                    await send_direct(error_envelope(ProtocolError(
                        ErrorCode.MALFORMED, "binary frames are not RCP envelopes",
                        "transport")))
                    if malformed_streak >= MAX_CONSECUTIVE_MALFORMED:
                        await ws.close(code=1008)
                        break
                    continue
                try:
                    frame = decode_frame(message["text"])
                    env = frame if isinstance(frame, Envelope) else reassembler.feed(frame)
                except ProtocolError as exc:
                    malformed_streak += 1
                    await send_direct(error_envelope(exc))
                    if malformed_streak >= MAX_CONSECUTIVE_MALFORMED:
                        await ws.close(code=1008)
                        break
                    continue
                malformed_streak = 0
                if env is None:
                    continue  # partial segmented request
                if env.kind is not Kind.REQUEST:
                    await send_direct(error_envelope(ProtocolError(
                        ErrorCode.MALFORMED, "only request envelopes may be sent",
                        "transport"), env.id))
                    continue
                if session is None:
                    # first envelope carries authentication and session setup
                    try:
                        principal = authenticate(env.auth)
                    except ProtocolError as exc:
                        await send_direct(error_envelope(exc, env.id))
                        await ws.close(code=1008)
                        break
                    resume_id = ws.query_params.get("session")
                    resumed = sessions.resume(resume_id, principal) if resume_id else None
                    session = resumed or sessions.create(principal, "websocket")
                    if isinstance(env.extra.get("accept_enc"), list) and \
                            "deflate" in env.extra["accept_enc"]:
                        session.compression_enabled = True
                    sender = asyncio.create_task(sender_loop(session))
                session.touch()
                principal = authenticate(env.auth) if env.auth else session.principal
                dispatcher.dispatch(env, principal, session, deliver=True,
                                    response_extra={"session": session.session_id})
        finally:
            if sender is not None:
                sender.cancel()
                try:
                    await sender
                except (asyncio.CancelledError, Exception):
                    pass
            if session is not None:
                sessions.disconnect(session)

    # --- SSE ---------------------------------------------------------------------------

    @app.get("/rcp/stream")
    async def sse_endpoint(request: Request) -> Response:
        try:
            principal = authenticate(bearer_from(request))
        except ProtocolError as exc:
            return error_json(exc)
        paths = request.query_params.getlist("path")
        if not paths:
            return error_json(ProtocolError(ErrorCode.MALFORMED,
                                            "at least one ?path= is required", "transport"))
        resume_id = request.query_params.get("session")
        resumed = sessions.resume(resume_id, principal) if resume_id else None
        session = resumed or sessions.create(principal, "sse")
        if resumed is None:
            for path in paths:
                response = dispatcher.dispatch(
                    Envelope.request(Op.SUBSCRIBE, path), principal, session)
                if response.error is not None:
                    sessions.disconnect(session)  # reaped by the next sweep
                    return error_json(ProtocolError(
                        response.error.code, response.error.message,
                        response.error.origin, response.error.remediation))

        last_raw = request.headers.get("last-event-id") or \
            request.query_params.get("last_event_id")
        replayed: list[Envelope] = []
        if resumed is not None and last_raw is not None:
            try:
                replayed = session.replay_since(int(last_raw))
            except ValueError:
                pass

        async def event_stream() -> AsyncIterator[str]:
            try:
                yield f": session {session.session_id}\n\n"
                for env in replayed:
                    yield _sse_frame(env, session)
                while True:
                    item = await session.next_item(timeout=cfg.sse_heartbeat_s)
                    if item is None:
                        yield ": keep-alive\n\n"
                        continue
                    yield _sse_frame(item.env, session)
            finally:
                sessions.disconnect(session)

        headers = {
            "Cache-Control": "no-cache",
            "Connection": "keep-alive",
            "X-RCP-Session": session.session_id,
            "X-Accel-Buffering": "no",
        }
        return StreamingResponse(event_stream(), media_type="text/event-stream",
                                 headers=headers)

    def _sse_frame(env: Envelope, session: Session) -> str:
        name = "rcp-error" if env.status in (Status.ERROR, Status.FAILED) else "rcp-event"
        frames = outbound_frames(env, session, cfg.segment_threshold)
        if len(frames) > 1:
            return "".join(f"event: rcp-segment\ndata: {frame}\n\n" for frame in frames)
        id_line = f"id: {env.seq}\n" if env.seq is not None else ""
        return f"event: {name}\n{id_line}data: {frames[0]}\n\n"

    # --- dashboard bundle ------------------------------------------------------------------

    _mount_dashboard(app, cfg)
    return app


def _mount_dashboard(app: FastAPI, cfg) -> None:
    from pathlib import Path

    from starlette.staticfiles import StaticFiles

    candidates = []
    if cfg.dashboard_dir:
        candidates.append(Path(cfg.dashboard_dir))
    candidates.append(Path(__file__).resolve().parents[2] / "dashboard" / "dist")
    for candidate in candidates:
        if candidate.is_dir():
            app.mount("/dashboard", StaticFiles(directory=candidate, html=True),
                      name="dashboard")
            return
