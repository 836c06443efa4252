"""Coordinator-side monitoring service.

Ingests the coordinator's raw byte stream, validates frames, keeps the
latest value per source, appends one CSV row per reading in the same column
order and timestamp style as the deployed spreadsheet log, and dispatches
waypoint commands down to the robot.
"""

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta

from .frames import (
    KIND_ROBOT_POSITION,
    KIND_TEMPERATURE,
    Frame,
    PayloadRegistry,
    StreamParser,
    encode_frame,
)
from .simnet import Network

CSV_HEADER = (
    "Date and Time,millis since start,Temp in Lab1,Temp in Lab2,"
    "Robot's position_X,Robot's position_Y"
)
DEFAULT_LOG_EPOCH = datetime(2013, 1, 23, 18, 8, 17)
STALE_AFTER_CADENCES = 3


class DispatchError(RuntimeError):
    """A waypoint could not be handed to the network."""


@dataclass(frozen=True)
class SensorReading:
    node_id: int
    kind: str
    values: tuple[int, ...]
    arrival_time_ms: float


@dataclass
class LiveState:
    temp_lab1: int | None = None
    temp_lab2: int | None = None
    robot_xy: tuple[int, int] | None = None
    last_seen_ms: dict[int, float] = field(default_factory=dict)
    frames_ok: int = 0
    checksum_failures: int = 0
    resync_skips: int = 0


def format_log_timestamp(moment: datetime) -> str:
    """Spreadsheet-style stamp without zero padding: 1/23/2013/18:8:19."""
    return (
        f"{moment.month}/{moment.day}/{moment.year}/"
        f"{moment.hour}:{moment.minute}:{moment.second}"
    )


class CsvLog:
    """Append-only fig-style CSV: one row per reading, absent columns carry
    the previous value (0 before the first reading of that column)."""

    def __init__(self, epoch: datetime = DEFAULT_LOG_EPOCH, path: str | None = None):
        self.epoch = epoch
        self.path = path
        self.lines: list[str] = [CSV_HEADER]
        self._last = {"temp1": 0, "temp2": 0, "x": 0, "y": 0}
        self._file = None
        if path is not None:
            self._file = open(path, "w", encoding="ascii", newline="")
            self._file.write(CSV_HEADER + "\n")
            self._file.flush()

    def append(self, time_ms: float, **updates) -> str:
        self._last.update(updates)
        millis = int(time_ms)
        stamp = format_log_timestamp(self.epoch + timedelta(milliseconds=time_ms))
        line = (
            f"{stamp},{millis},{self._last['temp1']},{self._last['temp2']},"
            f"{self._last['x']},{self._last['y']}"
        )
        self.lines.append(line)
        if self._file is not None:
            self._file.write(line + "\n")
            self._file.flush()
        return line

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None


class Gateway:
    """Single-writer ingest loop plus snapshot/command surfaces.

    The simulation loop is the only writer; HTTP handlers and other threads
    read through :meth:`snapshot` and push waypoints through a queue drained
    by the loop, so no handler ever touches live state directly.
    """

    def __init__(
        self,
        network: Network,
        robot_node: str | None = "robot",
        robot_wire_id: int = 3,
        registry: PayloadRegistry | None = None,
        log_epoch: datetime = DEFAULT_LOG_EPOCH,
        log_path: str | None = None,
        expected_cadence_ms: float = 500.0,
    ):
        self.network = network
        self.robot_node = robot_node
        self.robot_wire_id = robot_wire_id
        self.registry = registry or PayloadRegistry.gateway_default(robot_wire_id)
        self.parser = StreamParser(self.registry)
        self.state = LiveState()
        self.csv = CsvLog(log_epoch, log_path)
        self.expected_cadence_ms = expected_cadence_ms
        self.readings: list[SensorReading] = []
        self._lock = threading.Lock()
        self._subscribers: list = []
        coordinator = network.topology.coordinator_id
        network.set_handler(coordinator, self._on_frame)

    # -- ingest ------------------------------------------------------------

    def _on_frame(self, frame: Frame, time_ms: float) -> None:
        # the coordinator hands the gateway raw serial bytes; re-framing
        # here keeps the service honest about what crosses that port
        self.ingest(encode_frame(frame), time_ms)

    def ingest(self, data: bytes, time_ms: float) -> list[SensorReading]:
        emitted = []
        with self._lock:
            for frame in self.parser.feed(data):
                reading = self._apply(frame, time_ms)
                emitted.append(reading)
                self.readings.append(reading)
            self.state.frames_ok = self.parser.frames_ok
            self.state.checksum_failures = self.parser.checksum_failures
            self.state.resync_skips = self.parser.resync_skips
        for reading in emitted:
            self._publish(reading)
        return emitted

    def _apply(self, frame: Frame, time_ms: float) -> SensorReading:
        kind = self.registry.kind_of(frame.node_id)
        values = tuple(frame.payload)
        self.state.last_seen_ms[frame.node_id] = time_ms
        if kind == KIND_TEMPERATURE:
            column = "temp1" if frame.node_id == 1 else "temp2"
            if frame.node_id == 1:
                self.state.temp_lab1 = values[0]
            else:
                self.state.temp_lab2 = values[0]
            self.csv.append(time_ms, **{column: values[0]})
        elif kind == KIND_ROBOT_POSITION:
            self.state.robot_xy = (values[0], values[1])
            self.csv.append(time_ms, x=values[0], y=values[1])
        else:
            self.csv.append(time_ms)
        return SensorReading(frame.node_id, kind, values, time_ms)

    # -- reading side ------------------------------------------------------

    def snapshot(self, now_ms: float | None = None) -> dict:
        """Immutable copy of the live state, safe for any thread."""
        if now_ms is None:
            now_ms = self.network.now
        with self._lock:
            state = self.state
            stale_after = STALE_AFTER_CADENCES * self.expected_cadence_ms
            stale = {
                node_id: (now_ms - seen) > stale_after
                for node_id, seen in sorted(state.last_seen_ms.items())
            }
            return {
                "time_ms": now_ms,
                "temp_lab1": state.temp_lab1,
                "temp_lab2": state.temp_lab2,
                "robot_xy": list(state.robot_xy) if state.robot_xy else None,
                "last_seen_ms": dict(sorted(state.last_seen_ms.items())),
                "stale": stale,
                "frames_ok": state.frames_ok,
                "checksum_failures": state.checksum_failures,
                "resync_skips": state.resync_skips,
            }

    def subscribe(self, queue) -> None:
        with self._lock:
            self._subscribers.append(queue)

    def unsubscribe(self, queue) -> None:
        with self._lock:
            if queue in self._subscribers:
                self._subscribers.remove(queue)

    def _publish(self, reading: SensorReading) -> None:
        payload = json.dumps(
            {
                "node_id": reading.node_id,
                "kind": reading.kind,
                "values": list(reading.values),
                "time_ms": reading.arrival_time_ms,
            },
            separators=(",", ":"),
        )
        with self._lock:
            subscribers = list(self._subscribers)
        for queue in subscribers:
            queue.put(payload)

    # -- command side ------------------------------------------------------

    def send_waypoint(self, x_m: int, y_m: int) -> int:
        if not (isinstance(x_m, int) and isinstance(y_m, int)):
            raise ValueError("waypoint coordinates must be integers")
        if not (0 <= x_m <= 255 and 0 <= y_m <= 255):
            raise ValueError(f"waypoint ({x_m},{y_m}) outside 0..255")
        if self.robot_node is None or self.robot_node not in self.network.topology.nodes:
            raise DispatchError("no robot node in this scenario")
        coordinator = self.network.topology.coordinator_id
        if self.network.routes.path(coordinator, self.robot_node) is None:
            raise DispatchError(f"no route to {self.robot_node}")
        frame = Frame(self.robot_wire_id, bytes([x_m, y_m]))
        return self.network.send_frame(coordinator, self.robot_node, frame)
