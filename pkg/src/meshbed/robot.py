"""Differential-drive robot: plant, encoders, dead reckoning, waypoint mission.

The ground-truth plant integrates the unicycle model exactly (straight
segments and circular arcs), while the on-board estimate dead-reckons with
one Euler step per control tick from quadrature encoder counts.  The mission
follows the drive-x / turn-90-degrees / drive-y flow: commands and position
reports cross a zero-delay serial pipe as wire frames, so everything the
robot says or hears passes through the frame codec.
"""

import math
from dataclasses import dataclass, field, replace

from .frames import Frame, PayloadRegistry, StreamParser, encode_frame
from .simnet import Network

PHASE_IDLE = "idle"
PHASE_DRIVE_X = "drive_x"
PHASE_TURN = "turn"
PHASE_DRIVE_Y = "drive_y"
PHASE_DONE = "done"

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class RobotGeometry:
    wheel_radius_m: float = 0.05
    wheelbase_m: float = 0.4
    encoder_ppr: int = 400  # pulses per wheel revolution, all edges

    def __post_init__(self):
        if min(self.wheel_radius_m, self.wheelbase_m, self.encoder_ppr) <= 0:
            raise ValueError("geometry values must be > 0")


@dataclass(frozen=True)
class ControllerParams:
    cruise_speed_mps: float = 0.25
    turn_rate_rps: float = 0.5
    position_tol_m: float = 0.01
    heading_tol_rad: float = math.radians(0.5)


def normalize_angle(theta: float) -> float:
    """Wrap into (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, _TWO_PI)
    if wrapped <= 0.0:
        wrapped += _TWO_PI
    return wrapped - math.pi


@dataclass(frozen=True)
class Pose:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0


def wheel_velocities(v: float, omega: float, geometry: RobotGeometry) -> tuple[float, float]:
    """Invert v = r(wl+wr)/2, omega = r(wr-wl)/b to per-wheel rad/s."""
    r, b = geometry.wheel_radius_m, geometry.wheelbase_m
    wl = (v - omega * b / 2.0) / r
    wr = (v + omega * b / 2.0) / r
    return wl, wr


def plant_step(pose: Pose, wheel_speeds: tuple[float, float], dt: float, geometry: RobotGeometry) -> Pose:
    """Exact unicycle integration over dt with constant wheel speeds."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    wl, wr = wheel_speeds
    r, b = geometry.wheel_radius_m, geometry.wheelbase_m
    v = r * (wl + wr) / 2.0
    omega = r * (wr - wl) / b
    if omega == 0.0:
        return Pose(
            pose.x + v * math.cos(pose.theta) * dt,
            pose.y + v * math.sin(pose.theta) * dt,
            pose.theta,
        )
    radius = v / omega
    theta1 = pose.theta + omega * dt
    return Pose(
        pose.x + radius * (math.sin(theta1) - math.sin(pose.theta)),
        pose.y + radius * (math.cos(pose.theta) - math.cos(theta1)),
        normalize_angle(theta1),
    )


@dataclass
class EncoderCounts:
    """Integer pulse counts with fractional accumulators, so no pulse is
    ever lost across ticks regardless of tick length."""

    left: int = 0
    right: int = 0
    _frac_left: float = 0.0
    _frac_right: float = 0.0

    def update(self, wheel_speeds: tuple[float, float], dt: float, geometry: RobotGeometry) -> tuple[int, int]:
        """Advance by wheel rotation over dt; returns (d_left, d_right)."""
        if dt <= 0:
            raise ValueError("dt must be > 0")
        wl, wr = wheel_speeds
        self._frac_left += wl * dt * geometry.encoder_ppr / _TWO_PI
        self._frac_right += wr * dt * geometry.encoder_ppr / _TWO_PI
        d_left = int(self._frac_left)  # truncate toward zero, keep remainder
        d_right = int(self._frac_right)
        self._frac_left -= d_left
        self._frac_right -= d_right
        self.left += d_left
        self.right += d_right
        return d_left, d_right


def encoder_update(counts: EncoderCounts, wheel_speeds, dt, geometry) -> EncoderCounts:
    counts.update(wheel_speeds, dt, geometry)
    return counts


def odometry_update(
    estimate: Pose,
    delta_counts: tuple[float, float],
    dt: float,
    geometry: RobotGeometry,
) -> Pose:
    """One Euler dead-reckoning step from encoder pulse deltas."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    d_left, d_right = delta_counts
    r, b = geometry.wheel_radius_m, geometry.wheelbase_m
    wl = _TWO_PI * d_left / (geometry.encoder_ppr * dt)
    wr = _TWO_PI * d_right / (geometry.encoder_ppr * dt)
    v = r * (wl + wr) / 2.0
    omega = r * (wr - wl) / b
    return Pose(
        estimate.x + v * math.cos(estimate.theta) * dt,
        estimate.y + v * math.sin(estimate.theta) * dt,
        normalize_angle(estimate.theta + omega * dt),
    )


@dataclass(frozen=True)
class MissionState:
    phase: str = PHASE_IDLE
    target: tuple[int, int] = (0, 0)


def start_mission(target: tuple[int, int]) -> MissionState:
    """A new command always restarts the sequence at the drive-x leg."""
    return MissionState(PHASE_DRIVE_X, target)


def controller_step(
    mission: MissionState,
    estimate: Pose,
    params: ControllerParams = ControllerParams(),
) -> tuple[tuple[float, float], MissionState]:
    """One control decision: (v, omega) for the current leg, advancing the
    phase when the leg's goal is met on the current estimate.

    Legs complete when the estimate reaches the target coordinate itself
    (not target - tol): the reported integer position must actually hit the
    commanded cell.  The tolerance only widens the phase-entry skip checks,
    so a command for the cell the robot already occupies completes at once.
    """
    tx, ty = float(mission.target[0]), float(mission.target[1])
    phase = mission.phase
    # cascade past legs whose goal already holds
    while True:
        if phase == PHASE_DRIVE_X and estimate.x >= tx:
            phase = PHASE_TURN
        elif phase == PHASE_TURN and estimate.y >= ty - params.position_tol_m:
            phase = PHASE_DONE  # nothing left to drive; skip the turn
        elif phase == PHASE_TURN and estimate.theta >= math.pi / 2.0 - params.heading_tol_rad:
            phase = PHASE_DRIVE_Y
        elif phase == PHASE_DRIVE_Y and estimate.y >= ty:
            phase = PHASE_DONE
        else:
            break
    mission = replace(mission, phase=phase)
    if phase == PHASE_DRIVE_X or phase == PHASE_DRIVE_Y:
        return (params.cruise_speed_mps, 0.0), mission
    if phase == PHASE_TURN:
        return (0.0, params.turn_rate_rps), mission  # counterclockwise
    return (0.0, 0.0), mission


def position_payload(estimate: Pose) -> bytes:
    """Integer-meter report: floor each axis, clamp to one byte."""
    x = min(255, max(0, math.floor(estimate.x)))
    y = min(255, max(0, math.floor(estimate.y)))
    return bytes([x, y])


def report_position(estimate: Pose, robot_id: int = 3) -> Frame:
    return Frame(robot_id, position_payload(estimate))


class RobotNode:
    """Bridges the robot into the network as an end device.

    The radio endpoint and the motion controller talk over an in-process
    serial pipe: delivered command frames are re-encoded to bytes and parsed
    on the controller side, and position reports take the reverse trip, so
    both directions exercise the wire codec exactly like the RS-232 link.
    """

    def __init__(
        self,
        network: Network,
        name: str,
        wire_id: int = 3,
        geometry: RobotGeometry = RobotGeometry(),
        params: ControllerParams = ControllerParams(),
        control_period_ms: float = 10.0,
        report_period_ms: float = 500.0,
        initial_pose: Pose = Pose(),
    ):
        self.network = network
        self.name = name
        self.wire_id = wire_id
        self.geometry = geometry
        self.params = params
        self.control_period_ms = control_period_ms
        self.report_period_ms = report_period_ms
        self.plant = initial_pose
        self.estimate = initial_pose
        self.encoders = EncoderCounts()
        self.mission = MissionState()
        self.wheel_speeds = (0.0, 0.0)
        self.bad_commands = 0
        self.phase_log: list[tuple[float, str]] = []
        # serial pipe parsers: radio->controller carries commands,
        # controller->radio carries position reports
        self._command_parser = StreamParser(PayloadRegistry.robot_default(wire_id))
        reg = PayloadRegistry()
        reg.register(wire_id, 2, "robot-position")
        self._report_parser = StreamParser(reg)
        network.set_handler(name, self.on_frame)

    def start(self, at_ms: float = 0.0) -> None:
        self.network.schedule(at_ms, "robot_control", self.control_tick, src=self.name)
        self.network.schedule(at_ms, "robot_report", self.report_tick, src=self.name)

    # -- network side ------------------------------------------------------

    def on_frame(self, frame: Frame, time_ms: float) -> None:
        for command in self._command_parser.feed(encode_frame(frame)):
            self.handle_command(command)

    def handle_command(self, frame: Frame) -> None:
        if frame.node_id != self.wire_id or len(frame.payload) != 2:
            self.bad_commands += 1
            return
        target = (frame.payload[0], frame.payload[1])
        self.mission = start_mission(target)
        self.phase_log.append((self.network.now, self.mission.phase))

    # -- control loop ------------------------------------------------------

    def control_tick(self) -> None:
        dt = self.control_period_ms / 1000.0
        (v, omega), mission = controller_step(self.mission, self.estimate, self.params)
        if mission.phase != self.mission.phase:
            self.phase_log.append((self.network.now, mission.phase))
        self.mission = mission
        self.wheel_speeds = wheel_velocities(v, omega, self.geometry)
        self.plant = plant_step(self.plant, self.wheel_speeds, dt, self.geometry)
        delta = self.encoders.update(self.wheel_speeds, dt, self.geometry)
        self.estimate = odometry_update(self.estimate, delta, dt, self.geometry)
        self.network.schedule(
            self.network.now + self.control_period_ms, "robot_control", self.control_tick, src=self.name
        )

    def report_tick(self) -> None:
        frame = report_position(self.estimate, self.wire_id)
        decoded = self._report_parser.feed(encode_frame(frame))
        for report in decoded:
            self.network.send_frame(
                self.name, self.network.topology.coordinator_id, report
            )
        self.network.schedule(
            self.network.now + self.report_period_ms, "robot_report", self.report_tick, src=self.name
        )
