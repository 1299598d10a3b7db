"""Backend adapter contract and shared adapter plumbing.

An adapter declares resources, then fulfils read/write/execute calls for
them and pushes telemetry through the context it receives at mount time.
`docs/adapters.md` is the authoring guide; `rcp.simbot.SimRobot` is the
reference implementation.

Adapters own their state on a single logical loop: the gateway delivers
every handle_* call and tick from one thread, so implementations need no
internal locking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from .lifecycle import CommandHandle
from .registry import ResourceDescriptor, ResourcePath


@dataclass
class BackendContext:
    """Capabilities the gateway hands an adapter when mounting it."""

    tenant: str | None
    publish_fn: Callable[[str, Any], None]
    log_fn: Callable[[str, str, str], None]

    def canonical(self, local_path: str) -> str:
        if self.tenant is None:
            return local_path
        return f"/tenant/{self.tenant}{local_path}"

    def publish(self, local_path: str, payload: Any) -> None:
        """Emit one event on an adapter-local path (tenant applied here)."""
        self.publish_fn(self.canonical(local_path), payload)

    def log(self, level: str, message: str, origin: str = "adapter") -> None:
        self.log_fn(level, message, origin)


class Adapter:
    """Optional base class: name bookkeeping plus a context slot."""

    name: str = "adapter"
    display_name: str = "Adapter"

    def __init__(self):
        self.ctx: BackendContext | None = None

    def attach(self, ctx: BackendContext) -> None:
        self.ctx = ctx

    def declare_resources(self) -> list[ResourceDescriptor]:
        return []

    def handle_read(self, path: ResourcePath) -> Any:
        raise NotImplementedError(f"{self.name} cannot read {path}")

    def handle_write(self, path: ResourcePath, value: Any) -> Any:
        raise NotImplementedError(f"{self.name} cannot write {path}")

    def handle_execute(self, path: ResourcePath, args: Any, feedback: CommandHandle) -> None:
        raise NotImplementedError(f"{self.name} cannot execute {path}")

    def readiness(self) -> tuple[bool, str]:
        return True, "ok"


class DisconnectedAdapter(Adapter):
    """Placeholder for adapter types that are listed but not wired up.

    Shows up in health as not-ready; any execute routed to it is rejected
    with the not-connected message.
    """

    def __init__(self, name: str, display_name: str):
        super().__init__()
        self.name = name
        self.display_name = display_name

    def readiness(self) -> tuple[bool, str]:
        return False, "not connected"
