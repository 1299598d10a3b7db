"""Shared fixtures: in-process clients, a live server, scripted gateways."""

from __future__ import annotations

import json
import socket
import threading
import time

import pytest
import uvicorn
from starlette.testclient import TestClient

from rcp.adapter import Adapter
from rcp.config import GatewayConfig
from rcp.gateway import Gateway
from rcp.registry import ResourceDescriptor, parse_path
from rcp.schema import Primitive
from rcp.security import TenantPolicy
from rcp.simbot import SimBotConfig
from rcp.wire import Op, decode_envelope

ALL_GRANTS = frozenset({"read", "write", "execute", "subscribe", "discover", "status"})


def fast_config(**overrides) -> GatewayConfig:
    """Gateway tuned for tests: fast wall-clock ticks, 1 s simulated steps."""
    defaults = dict(
        simbot=SimBotConfig(tick_period=0.02, tick_dt=1.0),
        status_publish_period_s=0.2,
        sse_heartbeat_s=0.5,
        grace_window_s=5.0,
    )
    defaults.update(overrides)
    return GatewayConfig(**defaults)


def two_tenant_policies() -> list[TenantPolicy]:
    return [
        TenantPolicy("alpha-secret", "alpha", {"/tenant/alpha": ALL_GRANTS}),
        TenantPolicy("beta-secret", "beta", {"/tenant/beta": ALL_GRANTS}),
    ]


class BlobAdapter(Adapter):
    """Read-only resource serving a payload of arbitrary size."""

    name = "blob"
    display_name = "Blob"

    def __init__(self, size: int = 1024):
        super().__init__()
        self.size = size

    def declare_resources(self):
        return [ResourceDescriptor(
            path=parse_path("/sensor/blob"),
            supported_ops=frozenset({Op.READ, Op.SUBSCRIBE}),
            description="Synthetic bulk payload for segmentation checks.",
            output_schema=Primitive("string"),
        )]

    def handle_read(self, path):
        # repeating-but-aperiodic filler so truncation or reordering shows up
        pattern = "0123456789abcdefghijklmnopqrstuvwxyz-"
        reps = self.size // len(pattern) + 1
        return (pattern * reps)[: self.size]


@pytest.fixture
def gateway():
    return Gateway(fast_config())


@pytest.fixture
def client(gateway):
    with TestClient(gateway.app) as test_client:
        yield test_client


class LiveServer:
    """uvicorn in a daemon thread, torn down with the fixture."""

    def __init__(self, gateway: Gateway):
        self.gateway = gateway
        self._port = _free_port()
        config = uvicorn.Config(gateway.app, host="127.0.0.1", port=self._port,
                                log_level="warning")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self._port}"

    @property
    def ws_url(self) -> str:
        return f"ws://127.0.0.1:{self._port}/rcp/ws"

    def start(self):
        self.thread.start()
        deadline = time.monotonic() + 10
        while not self.server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("live server did not start")
            time.sleep(0.01)
        return self

    def stop(self):
        self.server.should_exit = True
        self.thread.join(timeout=10)


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture
def live_server():
    server = LiveServer(Gateway(fast_config())).start()
    yield server
    server.stop()


# --- tiny protocol helpers ------------------------------------------------------------

def ws_send(ws, op, path=None, *, body=None, id=None, auth=None, **extra):
    payload = {"type": op}
    if path is not None:
        payload["path"] = path
    if body is not None:
        payload["body"] = body
    if id is not None:
        payload["id"] = id
    if auth is not None:
        payload["auth"] = auth
    payload.update(extra)
    ws.send_text(json.dumps(payload))


def ws_recv(ws):
    return decode_envelope(ws.receive_text())
