"""Gateway configuration: dataclass defaults, JSON file loading, env overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .security import TenantPolicy, load_policy_file, policies_from_obj
from .simbot import SimBotConfig


@dataclass
class GatewayConfig:
    listen: str = "127.0.0.1:8420"
    tls_cert: str | None = None
    tls_key: str | None = None
    queue_bound: int = 256            # outbound messages per session
    grace_window_s: float = 30.0      # disconnected-session resume window
    segment_threshold: int = 64 * 1024
    command_ttl_s: float = 600.0      # terminal command record retention
    require_tenancy: bool = False
    open_access: bool | None = None   # None: open iff no policies configured
    policies: list[TenantPolicy] = field(default_factory=list)
    tenants: list[str] = field(default_factory=list)  # empty: one default-namespace robot
    simbot: SimBotConfig = field(default_factory=SimBotConfig)
    status_publish_period_s: float = 5.0
    sse_heartbeat_s: float = 15.0
    replay_buffer_size: int = 512     # delivered events kept per session for SSE resume
    dashboard_dir: str | None = None  # static bundle to serve at /dashboard

    @property
    def host(self) -> str:
        return self.listen.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen.rsplit(":", 1)[1])


def config_from_obj(obj: Mapping[str, Any]) -> GatewayConfig:
    cfg = GatewayConfig()
    simple = {
        "listen", "tls_cert", "tls_key", "queue_bound", "grace_window_s",
        "segment_threshold", "command_ttl_s", "require_tenancy", "open_access",
        "tenants", "status_publish_period_s", "sse_heartbeat_s",
        "replay_buffer_size", "dashboard_dir",
    }
    updates: dict[str, Any] = {k: obj[k] for k in simple if k in obj}
    if "simbot" in obj:
        updates["simbot"] = SimBotConfig(**obj["simbot"])
    if "policies" in obj:
        updates["policies"] = policies_from_obj({"policies": obj["policies"]})
    return replace(cfg, **updates)


def load_config_file(path: str | Path) -> GatewayConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_obj(json.load(fh))


def apply_env(cfg: GatewayConfig, env: Mapping[str, str] | None = None) -> GatewayConfig:
    """RCP_* environment variables win over the config file."""
    env = os.environ if env is None else env
    updates: dict[str, Any] = {}
    if "RCP_LISTEN" in env:
        updates["listen"] = env["RCP_LISTEN"]
    if "RCP_QUEUE_BOUND" in env:
        updates["queue_bound"] = int(env["RCP_QUEUE_BOUND"])
    if "RCP_GRACE_WINDOW" in env:
        updates["grace_window_s"] = float(env["RCP_GRACE_WINDOW"])
    if "RCP_SEGMENT_THRESHOLD" in env:
        updates["segment_threshold"] = int(env["RCP_SEGMENT_THRESHOLD"])
    if "RCP_COMMAND_TTL" in env:
        updates["command_ttl_s"] = float(env["RCP_COMMAND_TTL"])
    if "RCP_TLS_CERT" in env:
        updates["tls_cert"] = env["RCP_TLS_CERT"]
    if "RCP_TLS_KEY" in env:
        updates["tls_key"] = env["RCP_TLS_KEY"]
    if "RCP_POLICY_FILE" in env:
        updates["policies"] = load_policy_file(env["RCP_POLICY_FILE"])
    if "RCP_TICK_PERIOD" in env:
        updates["simbot"] = replace(cfg.simbot, tick_period=float(env["RCP_TICK_PERIOD"]))
    return replace(cfg, **updates)


def load_config(path: str | Path | None = None,
                env: Mapping[str, str] | None = None) -> GatewayConfig:
    cfg = load_config_file(path) if path else GatewayConfig()
    return apply_env(cfg, env)
