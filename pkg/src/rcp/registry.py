"""The unified context model: path grammar, resource registry, discovery.

Paths follow ``[/tenant/<name>]/<category>/<segment>[/<segment>...]`` with
lowercase ``[a-z0-9_]+`` tokens. The five categories are closed so the
category/operation constraint below can be enforced at registration.

Concurrency: resolution and discovery are read-only over an immutable
snapshot dict; registrations swap the snapshot under a lock.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass
from typing import Any, Callable

from .schema import SchemaNode, schema_to_catalog_form
from .wire import ErrorCode, Op, ProtocolError, iso_now

TOKEN_RE = re.compile(r"^[a-z0-9_]+$")

CATEGORIES = ("sensor", "action", "param", "service", "event")

#: Which operations each resource category may declare.
CATEGORY_OPS: dict[str, frozenset[Op]] = {
    "sensor": frozenset({Op.READ, Op.SUBSCRIBE}),
    "param": frozenset({Op.READ, Op.WRITE, Op.SUBSCRIBE}),
    "action": frozenset({Op.EXECUTE, Op.SUBSCRIBE}),
    "service": frozenset({Op.EXECUTE}),
    "event": frozenset({Op.SUBSCRIBE}),
}


def _bad_path(message: str) -> ProtocolError:
    return ProtocolError(ErrorCode.MALFORMED, message, "registry")


@dataclass(frozen=True, order=True)
class ResourcePath:
    """One addressable location in the context hierarchy."""

    tenant: str | None
    category: str
    segments: tuple[str, ...]

    def __str__(self) -> str:
        prefix = f"/tenant/{self.tenant}" if self.tenant else ""
        return prefix + "/" + "/".join((self.category, *self.segments))

    @property
    def local(self) -> str:
        """Canonical form with the tenant prefix stripped."""
        return "/" + "/".join((self.category, *self.segments))

    def with_tenant(self, tenant: str | None) -> "ResourcePath":
        return ResourcePath(tenant, self.category, self.segments)


def parse_path(raw: str) -> ResourcePath:
    """Parse and normalize a path string; inverse of str(ResourcePath)."""
    if not isinstance(raw, str) or not raw.startswith("/"):
        raise _bad_path(f"path must start with '/': {raw!r}")
    tokens = [t for t in raw.split("/") if t != ""]
    if raw.strip("/") != "/".join(tokens):
        raise _bad_path(f"empty path segment in {raw!r}")
    for token in tokens:
        if not TOKEN_RE.match(token):
            raise _bad_path(f"bad path token {token!r} (want lowercase [a-z0-9_]+)")
    tenant = None
    if tokens and tokens[0] == "tenant":
        if len(tokens) < 2:
            raise _bad_path("tenant prefix without a tenant name")
        tenant = tokens[1]
        tokens = tokens[2:]
    if len(tokens) < 2:
        raise _bad_path(f"path {raw!r} needs a category and at least one segment")
    category = tokens[0]
    if category not in CATEGORIES:
        raise _bad_path(f"unknown category {category!r} (want one of {', '.join(CATEGORIES)})")
    return ResourcePath(tenant, category, tuple(tokens[1:]))


def is_path_prefix(prefix: str, canonical: str) -> bool:
    """Segment-aligned prefix test: '/tenant/a' covers '/tenant/a/...' only."""
    if prefix == "/":
        return True
    prefix = prefix.rstrip("/")
    return canonical == prefix or canonical.startswith(prefix + "/")


def check_prefix_syntax(prefix: str) -> None:
    if prefix == "/":
        return
    if not prefix.startswith("/"):
        raise ValueError(f"prefix must start with '/': {prefix!r}")
    for token in prefix.strip("/").split("/"):
        if not TOKEN_RE.match(token):
            raise ValueError(f"bad prefix token {token!r} in {prefix!r}")


@dataclass(frozen=True)
class ResourceDescriptor:
    """What one path supports and what flows through it."""

    path: ResourcePath
    supported_ops: frozenset[Op]
    description: str
    input_schema: SchemaNode | None = None
    output_schema: SchemaNode | None = None
    example: Any = None

    def check(self) -> None:
        allowed = CATEGORY_OPS[self.path.category]
        excess = self.supported_ops - allowed
        if excess:
            ops = ", ".join(sorted(op.value for op in excess))
            raise ValueError(f"category {self.path.category!r} does not allow: {ops}")
        if not self.supported_ops:
            raise ValueError(f"descriptor for {self.path} declares no operations")
        if Op.EXECUTE in self.supported_ops and self.input_schema is None:
            raise ValueError(f"execute-capable descriptor {self.path} must define input_schema")

    def to_wire(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "path": str(self.path),
            "category": self.path.category,
            "supported_ops": sorted(op.value for op in self.supported_ops),
            "description": self.description,
        }
        if self.input_schema is not None:
            out["input_schema"] = schema_to_catalog_form(self.input_schema)
        if self.output_schema is not None:
            out["output_schema"] = schema_to_catalog_form(self.output_schema)
        if self.example is not None:
            out["example"] = self.example
        return out


@dataclass(frozen=True)
class DiscoveryCatalog:
    generated_at: str
    resources: tuple[ResourceDescriptor, ...]  # canonical-path order

    def to_wire(self) -> dict[str, Any]:
        return {
            "generated_at": self.generated_at,
            "resources": [r.to_wire() for r in self.resources],
        }


class Registry:
    """Registered resources plus their lookup and introspection surface."""

    def __init__(self, require_tenancy: bool = False):
        self._lock = threading.Lock()
        self._resources: dict[str, ResourceDescriptor] = {}
        self.require_tenancy = require_tenancy

    def register(self, descriptor: ResourceDescriptor) -> None:
        descriptor.check()
        if self.require_tenancy and descriptor.path.tenant is None:
            raise ValueError(f"deployment requires tenancy; {descriptor.path} has no tenant")
        key = str(descriptor.path)
        with self._lock:
            if key in self._resources:
                raise ProtocolError(ErrorCode.CONFLICT, f"path {key} already registered", "registry")
            snapshot = dict(self._resources)
            snapshot[key] = descriptor
            self._resources = snapshot

    def resolve(self, path: ResourcePath | str, op: Op) -> ResourceDescriptor:
        key = str(path)
        descriptor = self._resources.get(key)
        if descriptor is None:
            raise ProtocolError(ErrorCode.UNKNOWN_PATH, f"no resource at {key}", "registry")
        if op not in descriptor.supported_ops:
            supported = ", ".join(sorted(o.value for o in descriptor.supported_ops))
            raise ProtocolError(
                ErrorCode.OP_NOT_SUPPORTED,
                f"{key} does not support {op.value} (supported: {supported})",
                "registry",
            )
        return descriptor

    def get(self, path: ResourcePath | str) -> ResourceDescriptor | None:
        return self._resources.get(str(path))

    def paths(self) -> list[str]:
        return sorted(self._resources)

    def discover(self, scope: str | None = None,
                 visible: "Callable[[str], bool] | None" = None,
                 now: str | None = None) -> DiscoveryCatalog:
        """Catalog snapshot, optionally narrowed to one tenant and/or a
        caller-visibility predicate (security hands in `visible`)."""
        resources = self._resources
        selected = []
        for key in sorted(resources):
            descriptor = resources[key]
            if scope is not None and descriptor.path.tenant != scope:
                continue
            if visible is not None and not visible(key):
                continue
            selected.append(descriptor)
        return DiscoveryCatalog(generated_at=now or iso_now(), resources=tuple(selected))
