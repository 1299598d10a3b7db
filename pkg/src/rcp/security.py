"""Bearer-token authentication and prefix-scoped, per-operation ACLs.

Policies are immutable after load; `PolicyStore.reload` swaps the whole
set atomically, so checks never observe a half-applied policy. Default
deny: a path matching no granted prefix is refused for every operation.
"""

from __future__ import annotations

import hmac
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .registry import check_prefix_syntax, is_path_prefix
from .wire import ErrorCode, Op, ProtocolError

GRANTABLE = ("read", "write", "execute", "subscribe", "discover", "status")

#: unsubscribe rides on the subscribe grant; it only ever undoes one.
_GRANT_FOR_OP = {
    Op.READ: "read",
    Op.WRITE: "write",
    Op.EXECUTE: "execute",
    Op.SUBSCRIBE: "subscribe",
    Op.UNSUBSCRIBE: "subscribe",
    Op.DISCOVER: "discover",
    Op.STATUS: "status",
}


@dataclass(frozen=True)
class TenantPolicy:
    """One token bound to path prefixes with per-operation permissions."""

    token: str
    principal_name: str
    op_grants: dict[str, frozenset[str]]  # prefix -> granted operation names

    def __post_init__(self):
        if not self.token:
            raise ValueError("policy token must be non-empty")
        for prefix, grants in self.op_grants.items():
            check_prefix_syntax(prefix)
            unknown = set(grants) - set(GRANTABLE)
            if unknown:
                raise ValueError(f"unknown grants {sorted(unknown)} for prefix {prefix!r}")

    @property
    def allowed_prefixes(self) -> tuple[str, ...]:
        return tuple(self.op_grants)


@dataclass(frozen=True)
class Principal:
    """An authenticated caller plus its effective grants."""

    name: str
    op_grants: dict[str, frozenset[str]]

    def permits(self, canonical_path: str, op: Op) -> bool:
        needed = _GRANT_FOR_OP[op]
        return any(
            needed in grants and is_path_prefix(prefix, canonical_path)
            for prefix, grants in self.op_grants.items()
        )

    def holds_grant(self, op: Op) -> bool:
        """True if any prefix carries the grant (for path-free ops)."""
        needed = _GRANT_FOR_OP[op]
        return any(needed in grants for grants in self.op_grants.values())

    def can_see(self, canonical_path: str) -> bool:
        """Visibility for discovery filtering: any grant on a covering prefix."""
        return any(
            grants and is_path_prefix(prefix, canonical_path)
            for prefix, grants in self.op_grants.items()
        )

    def may_scope(self, tenant: str) -> bool:
        """Whether a discovery scope is even addressable by this caller."""
        scope_prefix = f"/tenant/{tenant}"
        return any(
            is_path_prefix(prefix, scope_prefix) or is_path_prefix(scope_prefix, prefix.rstrip("/") or "/")
            for prefix in self.op_grants
        )


ANONYMOUS = Principal("anonymous", {"/": frozenset(GRANTABLE)})


class PolicyStore:
    """Token lookup and authorization over a static policy set."""

    def __init__(self, policies: Iterable[TenantPolicy] = (), open_access: bool | None = None):
        policies = tuple(policies)
        names = [p.principal_name for p in policies]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate principal names in policy set: {names}")
        self._policies = policies
        # with no policies configured the deployment is open by default
        self.open_access = (not policies) if open_access is None else open_access

    def reload(self, policies: Iterable[TenantPolicy]) -> None:
        self._policies = tuple(policies)

    def authenticate(self, token: str | None) -> Principal:
        """Resolve a bearer token; comparison is constant-time per policy."""
        if token:
            matched = None
            for policy in self._policies:
                # scan every policy so timing does not leak which token matched
                if hmac.compare_digest(policy.token.encode(), token.encode()):
                    matched = policy
            if matched is not None:
                return Principal(matched.principal_name, dict(matched.op_grants))
        if self.open_access:
            return ANONYMOUS
        raise ProtocolError(
            ErrorCode.UNAUTHORIZED,
            "missing or unknown token" if not token else "unknown token",
            "security",
            remediation="supply a configured bearer token",
        )

    def authorize(self, principal: Principal, canonical_path: str, op: Op) -> None:
        if not principal.permits(canonical_path, op):
            raise ProtocolError(
                ErrorCode.FORBIDDEN,
                f"{principal.name} may not {op.value} {canonical_path}",
                "security",
            )


def policies_from_obj(obj: dict) -> list[TenantPolicy]:
    out = []
    for entry in obj.get("policies", []):
        grants = {
            prefix: frozenset(ops)
            for prefix, ops in entry["grants"].items()
        }
        out.append(TenantPolicy(entry["token"], entry["principal"], grants))
    return out


def load_policy_file(path: str | Path) -> list[TenantPolicy]:
    """Read the JSON policy file (see docs/policies.md for the format)."""
    with open(path, encoding="utf-8") as fh:
        return policies_from_obj(json.load(fh))
