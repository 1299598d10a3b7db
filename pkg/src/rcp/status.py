"""Gateway health: uptime, adapter readiness, backpressure, recent problems.

Counter updates take a lock shared with snapshot assembly so a snapshot is
never torn; writers block only for the few assignments involved.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable

LOG_LEVELS = ("warning", "error")

COMMAND_COUNTERS = ("accepted", "in_progress", "completed", "failed", "rejected")


@dataclass
class AdapterHealth:
    name: str
    ready: bool
    detail: str


class HealthMonitor:
    """Collects runtime metrics and serves consistent snapshots."""

    def __init__(self, clock: Callable[[], float] = time.monotonic,
                 log_bound: int = 100):
        self._lock = threading.Lock()
        self._clock = clock
        self._t0 = clock()
        self.started_at = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")
        self._log: deque[dict[str, Any]] = deque(maxlen=log_bound)
        self._commands = {name: 0 for name in COMMAND_COUNTERS}
        self._drops_total = 0
        # wired in by the gateway after construction
        self.adapter_probe: Callable[[], list[AdapterHealth]] = lambda: []
        self.session_probe: Callable[[], dict[str, int]] = lambda: {
            "sessions_active": 0, "max_depth": 0, "sessions_at_bound": 0,
        }

    def record_log(self, level: str, message: str, origin: str | None = None) -> None:
        if level not in LOG_LEVELS:
            raise ValueError(f"level must be one of {LOG_LEVELS}, got {level!r}")
        entry: dict[str, Any] = {
            "level": level,
            "message": message,
            "timestamp": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ"),
        }
        if origin is not None:
            entry["origin"] = origin
        with self._lock:
            self._log.append(entry)

    def count_command(self, state: str) -> None:
        with self._lock:
            self._commands[state] += 1

    def count_drop(self, n: int = 1) -> None:
        with self._lock:
            self._drops_total += n

    def snapshot(self) -> dict[str, Any]:
        sessions = self.session_probe()
        adapters = [{"name": a.name, "ready": a.ready, "detail": a.detail}
                    for a in self.adapter_probe()]
        with self._lock:
            commands = dict(self._commands)
            recent = list(self._log)
            drops = self._drops_total
            uptime = self._clock() - self._t0
        out: dict[str, Any] = {
            "uptime_s": uptime,
            "started_at": self.started_at,
            "adapters": adapters,
            "sessions_active": sessions["sessions_active"],
            "queue_backpressure": {
                "max_depth": sessions["max_depth"],
                "sessions_at_bound": sessions["sessions_at_bound"],
                "drops_total": drops,
            },
            "recent_log": recent,
            "commands": commands,
        }
        out.update(_process_usage())
        return out


def _process_usage() -> dict[str, Any]:
    """Memory/CPU, only where the platform hands it over cheaply."""
    try:
        import resource
        usage = resource.getrusage(resource.RUSAGE_SELF)
        # ru_maxrss is KiB on Linux
        return {
            "memory_rss_bytes": usage.ru_maxrss * 1024,
            "cpu_seconds": usage.ru_utime + usage.ru_stime,
        }
    except Exception:  # pragma: no cover - non-POSIX fallback
        return {}
