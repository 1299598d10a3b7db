"""Composition root: wires registry, security, lifecycle, backends, transport.

One Gateway owns one asyncio loop's worth of state. The tick loop drives
every mounted robot; the status loop publishes health snapshots and sweeps
expired sessions. `call_in_loop` is the thread-safe way in (used by tests
and operational tooling to inject work onto the gateway loop).
"""

from __future__ import annotations

import asyncio
import concurrent.futures
from contextlib import asynccontextmanager
from datetime import datetime
from typing import Any, Callable

from .adapter import DisconnectedAdapter
from .config import GatewayConfig
from .lifecycle import Dispatcher
from .registry import Registry, ResourceDescriptor, parse_path
from .security import PolicyStore
from .simbot import SimRobot
from .status import AdapterHealth, HealthMonitor
from .wire import Op


class Gateway:
    def __init__(self, config: GatewayConfig | None = None, *,
                 monitor_clock: Callable[[], float] | None = None,
                 boot_time: datetime | None = None):
        self.config = config or GatewayConfig()
        self.registry = Registry(require_tenancy=self.config.require_tenancy)
        self.policies = PolicyStore(self.config.policies, self.config.open_access)
        self.monitor = HealthMonitor(**({"clock": monitor_clock} if monitor_clock else {}))
        self.dispatcher = Dispatcher(self.registry, self.policies, self.monitor,
                                     command_ttl_s=self.config.command_ttl_s)
        self.loop: asyncio.AbstractEventLoop | None = None

        self.bots: dict[str | None, SimRobot] = {}
        tenants: list[str | None] = list(self.config.tenants) or [None]
        for tenant in tenants:
            bot = SimRobot(self.config.simbot, boot_time=boot_time)
            self.dispatcher.mount(bot, tenant=tenant)
            self.bots[tenant] = bot

        # adapter types the architecture names but this deployment leaves dark
        self.stub_adapters = [DisconnectedAdapter("mcp", "MCP"),
                              DisconnectedAdapter("a2a", "A2A")]

        self.status_event_paths: list[str] = []
        for tenant in tenants:
            prefix = f"/tenant/{tenant}" if tenant else ""
            path = f"{prefix}/event/status"
            self.registry.register(ResourceDescriptor(
                path=parse_path(path),
                supported_ops=frozenset({Op.SUBSCRIBE}),
                description="Gateway health snapshot, republished periodically.",
            ))
            self.status_event_paths.append(path)

        self.monitor.adapter_probe = self._adapter_health
        # transport installs the real session probe when it builds the app
        self._app = None

    # --- health ---------------------------------------------------------------

    def _adapter_health(self) -> list[AdapterHealth]:
        out = []
        for tenant, bot in self.bots.items():
            ready, detail = bot.readiness()
            name = bot.name if tenant is None else f"{bot.name}/{tenant}"
            out.append(AdapterHealth(name, ready, detail))
        for stub in self.stub_adapters:
            ready, detail = stub.readiness()
            out.append(AdapterHealth(stub.name, ready, detail))
        return out

    # --- app / background machinery --------------------------------------------

    @property
    def app(self):
        if self._app is None:
            from .transport import build_app  # deferred: transport imports us for typing
            self._app = build_app(self)
        return self._app

    @asynccontextmanager
    async def lifespan(self, _app=None):
        self.loop = asyncio.get_running_loop()
        for bot in self.bots.values():
            bot.start()
        tasks = [
            asyncio.create_task(self._tick_loop(), name="rcp-tick"),
            asyncio.create_task(self._status_loop(), name="rcp-status"),
        ]
        try:
            yield
        finally:
            for bot in self.bots.values():
                bot.stop()
            for task in tasks:
                task.cancel()
            await asyncio.gather(*tasks, return_exceptions=True)

    async def _tick_loop(self):
        period = self.config.simbot.tick_period
        dt = self.config.simbot.dt
        while True:
            await asyncio.sleep(period)
            for bot in self.bots.values():
                try:
                    bot.tick(dt)
                except Exception as exc:  # a sick backend must not kill the loop
                    self.monitor.record_log("error", f"tick failed: {exc}", origin="adapter")

    async def _status_loop(self):
        while True:
            await asyncio.sleep(self.config.status_publish_period_s)
            self.sweep_sessions()
            snapshot = self.monitor.snapshot()
            for path in self.status_event_paths:
                self.dispatcher.publish(path, snapshot)

    def sweep_sessions(self) -> None:
        sessions = getattr(self, "sessions", None)
        if sessions is not None:
            sessions.sweep(self.dispatcher.drop_session)

    # --- operational helpers ------------------------------------------------------

    def call_in_loop(self, fn: Callable[..., Any], *args: Any) -> Any:
        """Run fn(*args) on the gateway loop from any thread; returns its result."""
        assert self.loop is not None, "gateway not started"
        fut: concurrent.futures.Future = concurrent.futures.Future()

        def runner():
            try:
                fut.set_result(fn(*args))
            except BaseException as exc:
                fut.set_exception(exc)

        self.loop.call_soon_threadsafe(runner)
        return fut.result(timeout=30)

    def publish(self, path: str, payload: Any) -> None:
        self.dispatcher.publish(path, payload)
