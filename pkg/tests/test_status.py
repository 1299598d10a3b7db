"""Health snapshots: monotonicity, ring buffer, counter accounting."""

import pytest

from rcp.status import AdapterHealth, HealthMonitor


def test_fresh_snapshot():
    monitor = HealthMonitor()
    snap = monitor.snapshot()
    assert snap["uptime_s"] >= 0
    assert all(v == 0 for v in snap["commands"].values())
    assert snap["recent_log"] == []
    assert snap["queue_backpressure"]["drops_total"] == 0


def test_uptime_uses_injected_clock():
    now = [100.0]
    monitor = HealthMonitor(clock=lambda: now[0])
    assert monitor.snapshot()["uptime_s"] == 0.0
    now[0] = 160.0
    assert monitor.snapshot()["uptime_s"] == 60.0


def test_log_ring_buffer_evicts_oldest():
    monitor = HealthMonitor(log_bound=100)
    for i in range(101):
        monitor.record_log("warning", f"w{i}")
    log = monitor.snapshot()["recent_log"]
    assert len(log) == 100
    assert log[0]["message"] == "w1"
    assert log[-1]["message"] == "w100"


def test_info_level_rejected():
    with pytest.raises(ValueError):
        HealthMonitor().record_log("info", "too chatty")


def test_log_entry_shape():
    monitor = HealthMonitor()
    monitor.record_log("error", "boom", origin="lifecycle")
    entry = monitor.snapshot()["recent_log"][0]
    assert entry["level"] == "error"
    assert entry["origin"] == "lifecycle"
    assert "timestamp" in entry


def test_counters_and_monotonicity():
    now = [0.0]
    monitor = HealthMonitor(clock=lambda: now[0])
    snapshots = []
    script = ["accepted", "in_progress", "completed",
              "accepted", "in_progress", "failed",
              "rejected", "accepted"]
    for state in script:
        monitor.count_command(state)
        now[0] += 1.0
        snapshots.append(monitor.snapshot())
    for earlier, later in zip(snapshots, snapshots[1:]):
        assert later["uptime_s"] >= earlier["uptime_s"]
        for key, value in earlier["commands"].items():
            assert later["commands"][key] >= value
    final = snapshots[-1]["commands"]
    assert final == {"accepted": 3, "in_progress": 2, "completed": 1,
                     "failed": 1, "rejected": 1}
    assert final["completed"] + final["failed"] <= final["accepted"]


def test_adapter_probe_feeds_snapshot():
    monitor = HealthMonitor()
    monitor.adapter_probe = lambda: [
        AdapterHealth("simbot", True, "tick loop running"),
        AdapterHealth("mcp", False, "not connected"),
    ]
    adapters = {a["name"]: a for a in monitor.snapshot()["adapters"]}
    assert adapters["mcp"] == {"name": "mcp", "ready": False, "detail": "not connected"}
    assert adapters["simbot"]["ready"] is True


def test_drop_counter_accumulates():
    monitor = HealthMonitor()
    monitor.count_drop(3)
    monitor.count_drop()
    assert monitor.snapshot()["queue_backpressure"]["drops_total"] == 4
