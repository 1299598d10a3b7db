"""Deterministic simulated robot: straight-line kinematics on a tick loop.

Stands in for a real middleware runtime behind the adapter contract. Motion
is dead simple on purpose: position advances along the line to the target
by min(speed_limit * dt, remaining distance) per tick, orientation stays at
identity, and the pose is republished every tick. Given the same command
sequence and tick schedule the emitted trace is identical, which the test
suite leans on.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Any

from .adapter import Adapter
from .lifecycle import CommandHandle
from .registry import ResourceDescriptor, ResourcePath, parse_path
from .schema import Alias, Field, Map, Primitive
from .wire import ErrorCode, ErrorDetail, Op, ProtocolError, Status

SPEED_LIMIT_RANGE = (0.0, 5.0)  # open below, closed above, m/s

SPEED_LIMIT_RANGE_MESSAGE = (
    "Failed to apply configuration: parameter 'speed_limit' exceeds allowed range."
)

_ARRIVAL_EPS = 1e-9


@dataclass
class SimBotConfig:
    speed_limit: float = 1.0     # m/s
    tick_period: float = 0.1     # wall-clock seconds between ticks
    tick_dt: float | None = None  # simulated seconds per tick; defaults to tick_period
    frame_id: str = "map"
    event_log_bound: int = 100

    @property
    def dt(self) -> float:
        return self.tick_dt if self.tick_dt is not None else self.tick_period


@dataclass
class ActiveAction:
    handle: CommandHandle
    target: tuple[float, float, float]
    total: float
    traveled: float = 0.0


class SimRobot(Adapter):
    name = "simbot"
    display_name = "SimBot"

    def __init__(self, config: SimBotConfig | None = None,
                 boot_time: datetime | None = None):
        super().__init__()
        self.config = config or SimBotConfig()
        self.boot_time = boot_time or datetime.now(timezone.utc)
        self.position = [0.0, 0.0, 0.0]
        self.orientation = {"x": 0.0, "y": 0.0, "z": 0.0, "w": 1.0}
        self.params: dict[str, float] = {"speed_limit": float(self.config.speed_limit)}
        self.active: ActiveAction | None = None
        self.sim_elapsed_s = 0.0
        self.started = False
        self.event_log: deque[str] = deque(maxlen=self.config.event_log_bound)
        self._check_state()

    # --- adapter contract -----------------------------------------------------

    def declare_resources(self) -> list[ResourceDescriptor]:
        return [
            ResourceDescriptor(
                path=parse_path("/sensor/pose"),
                supported_ops=frozenset({Op.READ, Op.SUBSCRIBE}),
                description="Robot position and orientation in the map frame.",
                output_schema=Alias("Pose"),
                example=_POSE_EXAMPLE,
            ),
            ResourceDescriptor(
                path=parse_path("/action/move_to"),
                supported_ops=frozenset({Op.EXECUTE, Op.SUBSCRIBE}),
                description="Drive in a straight line to a target point; "
                            "feedback streams until arrival.",
                input_schema=Map((Field("target", Alias("Vector3")),)),
            ),
            ResourceDescriptor(
                path=parse_path("/param/speed_limit"),
                supported_ops=frozenset({Op.READ, Op.WRITE, Op.SUBSCRIBE}),
                description="Maximum speed in m/s; accepted range (0, 5].",
                input_schema=Primitive("float"),
                output_schema=Primitive("float"),
            ),
            ResourceDescriptor(
                path=parse_path("/service/reset_system"),
                supported_ops=frozenset({Op.EXECUTE}),
                description="Return the robot to the origin and abort any "
                            "motion in flight.",
                input_schema=Map(()),
            ),
            ResourceDescriptor(
                path=parse_path("/event/system"),
                supported_ops=frozenset({Op.SUBSCRIBE}),
                description="System-level notifications (resets, faults).",
                output_schema=Map((
                    Field("level", Primitive("string")),
                    Field("message", Primitive("string")),
                )),
            ),
        ]

    def handle_read(self, path: ResourcePath) -> Any:
        local = path.local
        if local == "/sensor/pose":
            return self.pose_doc()
        if local == "/param/speed_limit":
            return self.params["speed_limit"]
        raise ProtocolError(ErrorCode.UNKNOWN_PATH, f"simbot cannot read {local}", "adapter")

    def handle_write(self, path: ResourcePath, value: Any) -> Any:
        local = path.local
        if local == "/param/speed_limit":
            lo, hi = SPEED_LIMIT_RANGE
            if not (lo < float(value) <= hi):
                raise ProtocolError(ErrorCode.OUT_OF_RANGE, SPEED_LIMIT_RANGE_MESSAGE,
                                    "adapter",
                                    remediation=f"choose a value in ({lo}, {hi}]")
            self.params["speed_limit"] = float(value)  # takes effect next tick
            self.event_log.append(f"speed_limit set to {value}")
            return self.params["speed_limit"]
        raise ProtocolError(ErrorCode.UNKNOWN_PATH, f"simbot cannot write {local}", "adapter")

    def handle_execute(self, path: ResourcePath, args: Any, feedback: CommandHandle) -> None:
        local = path.local
        if local == "/action/move_to":
            if self.active is not None:
                raise ProtocolError(ErrorCode.CONFLICT,
                                    "an action is already in flight", "adapter")
            target = args["target"]
            goal = (float(target["x"]), float(target["y"]), float(target["z"]))
            total = _distance(tuple(self.position), goal)
            self.active = ActiveAction(handle=feedback, target=goal, total=total)
            self.event_log.append(f"move_to accepted, distance {total:.3f} m")
        elif local == "/service/reset_system":
            self._reset(path, feedback)
        else:
            raise ProtocolError(ErrorCode.UNKNOWN_PATH, f"simbot cannot execute {local}", "adapter")

    def readiness(self) -> tuple[bool, str]:
        if self.started:
            return True, "tick loop running"
        return False, "tick loop not started"

    # --- simulation -----------------------------------------------------------

    def start(self) -> None:
        self.started = True

    def stop(self) -> None:
        self.started = False

    def tick(self, dt: float) -> None:
        """Advance the simulation by dt seconds and republish the pose."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.sim_elapsed_s += dt
        if self.active is not None:
            self._advance_motion(dt)
        self._check_state()
        if self.ctx is not None:
            self.ctx.publish("/sensor/pose", self.pose_doc())

    def _advance_motion(self, dt: float) -> None:
        action = self.active
        assert action is not None
        speed = self.params["speed_limit"]
        remaining = _distance(tuple(self.position), action.target)
        step = speed * dt
        if remaining <= step + _ARRIVAL_EPS:
            self.position = list(action.target)
            action.traveled = action.total
            self.active = None
            if action.handle.state() is Status.ACCEPTED:
                action.handle.in_progress(1.0)
            path = self._action_path()
            action.handle.completed(
                result={"reached": True, "position": self._position_doc()},
                message=f"Command {path} executed successfully.",
                progress=1.0,
            )
            self.event_log.append("move_to completed")
            return
        scale = step / remaining
        for i, goal in enumerate(action.target):
            self.position[i] += (goal - self.position[i]) * scale
        action.traveled += step
        progress = action.traveled / action.total if action.total > 0 else 1.0
        action.handle.in_progress(min(progress, 1.0))

    def _reset(self, path: ResourcePath, feedback: CommandHandle) -> None:
        if self.active is not None:
            stale = self.active
            self.active = None
            if stale.handle.state() is Status.ACCEPTED:
                stale.handle.in_progress(0.0)
            stale.handle.failed(ErrorDetail(
                ErrorCode.CONFLICT,
                f"Command {self._action_path()} aborted by system reset.",
                "adapter",
                remediation="superseded by reset",
            ))
        self.position = [0.0, 0.0, 0.0]
        self.orientation = {"x": 0.0, "y": 0.0, "z": 0.0, "w": 1.0}
        self.event_log.append("system reset")
        if self.ctx is not None:
            self.ctx.publish("/event/system", {"level": "info", "message": "system reset"})
        feedback.in_progress(1.0)
        feedback.completed(result={"reset": True},
                           message=f"Command {path} executed successfully.",
                           progress=1.0)

    # --- state ----------------------------------------------------------------

    def pose_doc(self) -> dict[str, Any]:
        stamp = self.boot_time + timedelta(seconds=self.sim_elapsed_s)
        return {
            "position": self._position_doc(),
            "orientation": dict(self.orientation),
            "frame_id": self.config.frame_id,
            "timestamp": stamp.strftime("%Y-%m-%dT%H:%M:%S.%fZ"),
        }

    def _position_doc(self) -> dict[str, float]:
        return {"x": self.position[0], "y": self.position[1], "z": self.position[2]}

    def _action_path(self) -> str:
        tenant = self.ctx.tenant if self.ctx is not None else None
        prefix = f"/tenant/{tenant}" if tenant else ""
        return f"{prefix}/action/move_to"

    def _check_state(self) -> None:
        q = self.orientation
        norm = math.sqrt(q["x"] ** 2 + q["y"] ** 2 + q["z"] ** 2 + q["w"] ** 2)
        if abs(norm - 1.0) > 1e-9:
            raise AssertionError(f"orientation drifted off unit norm: {norm}")
        lo, hi = SPEED_LIMIT_RANGE
        if not (lo < self.params["speed_limit"] <= hi):
            raise AssertionError(f"speed_limit {self.params['speed_limit']} out of range")


_POSE_EXAMPLE = {
    "position": {"x": 1.23, "y": 4.56, "z": 0.00},
    "orientation": {"x": 0.0, "y": 0.0, "z": 0.0, "w": 1.0},
    "frame_id": "map",
    "timestamp": "2025-05-29T14:12:04Z",
}


def _distance(a: tuple[float, ...], b: tuple[float, ...]) -> float:
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def ticks_to_reach(distance: float, speed: float, dt: float) -> int:
    """Closed-form tick count for a straight-line move (test oracle)."""
    if distance <= 0:
        return 1
    return max(1, math.ceil(distance / (speed * dt) - _ARRIVAL_EPS))
