"""Scenario files: parsing, validation, and testbed assembly.

A scenario is one JSON document describing the topology, the delay model
(either explicit parameters or calibration rows to fit), per-node
applications (temperature ambient models, the robot), scripted failures and
waypoints, and run settings.  Parsing collects every problem it can find
rather than stopping at the first.
"""

import json
import math
import time
from dataclasses import dataclass, field
from datetime import datetime
from importlib import resources

from .frames import KIND_ROBOT_POSITION, KIND_TEMPERATURE, PayloadRegistry
from .gateway import DEFAULT_LOG_EPOCH, DispatchError, Gateway
from .robot import ControllerParams, Pose, RobotGeometry, RobotNode
from .simnet import (
    DelayParams,
    Network,
    NodeSpec,
    SleepSchedule,
    build_topology,
    calibrate_delay_params,
)
from .tempnode import AmbientModel, TemperatureNode

BUNDLED_SCENARIOS = ("reference", "failover")


class ScenarioError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


@dataclass
class TempAppConfig:
    node: str
    wire_id: int
    ambient: AmbientModel
    sample_period_ms: float = 500.0
    adc_noise: bool = False


@dataclass
class RobotAppConfig:
    node: str
    wire_id: int = 3
    geometry: RobotGeometry = field(default_factory=RobotGeometry)
    controller: ControllerParams = field(default_factory=ControllerParams)
    control_period_ms: float = 10.0
    report_period_ms: float = 500.0
    initial_pose: Pose = field(default_factory=Pose)


@dataclass
class ScenarioConfig:
    name: str
    pan_id: int
    permit_join: bool
    nodes: list[NodeSpec]
    links_down: list[tuple[str, str]]
    delay_params: DelayParams
    temp_apps: list[TempAppConfig]
    robot_app: RobotAppConfig | None
    failures: list[dict]
    waypoints: list[dict]
    seed: int = 0
    duration_s: float = 60.0
    jitter: bool = False
    speed: str = "fast"
    log_epoch: datetime = DEFAULT_LOG_EPOCH
    expected_cadence_ms: float = 500.0
    calibration_rows: list[tuple[int, float, float]] | None = None

    def gateway_registry(self) -> PayloadRegistry:
        registry = PayloadRegistry()
        for app in self.temp_apps:
            registry.register(app.wire_id, 1, KIND_TEMPERATURE)
        if self.robot_app is not None:
            registry.register(self.robot_app.wire_id, 2, KIND_ROBOT_POSITION)
        return registry


def _parse_nodes(raw_nodes, errors):
    specs = []
    ids = set()
    for i, raw in enumerate(raw_nodes):
        label = raw.get("id", f"nodes[{i}]")
        if "id" not in raw:
            errors.append(f"nodes[{i}]: missing id")
        if label in ids:
            errors.append(f"node {label!r}: duplicate id")
        ids.add(label)
        role = raw.get("role", "")
        if role not in ("coordinator", "router", "end_device"):
            errors.append(f"node {label!r}: unknown role {role!r}")
        position = raw.get("position", [0, 0])
        if not (isinstance(position, list) and len(position) == 2):
            errors.append(f"node {label!r}: position must be [x, y]")
            position = [0, 0]
        radio_range = raw.get("range", 0)
        if not radio_range or radio_range <= 0:
            errors.append(f"node {label!r}: range must be > 0")
            radio_range = 1.0
        sleep = None
        if "sleep" in raw and raw["sleep"] is not None:
            try:
                sleep = SleepSchedule(raw["sleep"]["period_ms"], raw["sleep"]["awake_ms"])
            except (KeyError, TypeError, ValueError) as exc:
                errors.append(f"node {label!r}: bad sleep schedule ({exc})")
        pan_id = raw.get("pan_id")
        if isinstance(pan_id, str):
            pan_id = int(pan_id, 0)
        specs.append(
            NodeSpec(label, role, (float(position[0]), float(position[1])), float(radio_range), sleep, pan_id)
        )
    return specs, ids


def _parse_apps(raw_nodes, node_ids, errors):
    temp_apps: list[TempAppConfig] = []
    robot_app = None
    wire_ids = set()
    for raw in raw_nodes:
        app = raw.get("app")
        if app is None:
            continue
        label = raw.get("id", "?")
        kind = app.get("kind")
        wire_id = app.get("wire_id")
        if wire_id is None or not 1 <= wire_id <= 254:
            errors.append(f"node {label!r}: app wire_id must be 1..254")
            continue
        if wire_id in wire_ids:
            errors.append(f"node {label!r}: wire_id {wire_id} already in use")
        wire_ids.add(wire_id)
        if kind == "temperature":
            if wire_id not in (1, 2):
                errors.append(f"node {label!r}: temperature nodes use wire ids 1 and 2")
            ambient_raw = app.get("ambient", {})
            try:
                ambient = AmbientModel(
                    ambient_raw.get("baseline_c", 25.0),
                    ambient_raw.get("walk_step_c", 0.5),
                    ambient_raw.get("min_c", 0.0),
                    ambient_raw.get("max_c", 50.0),
                )
            except ValueError as exc:
                errors.append(f"node {label!r}: {exc}")
                continue
            temp_apps.append(
                TempAppConfig(
                    label, wire_id, ambient,
                    app.get("sample_period_ms", 500.0),
                    app.get("adc_noise", False),
                )
            )
        elif kind == "robot":
            if robot_app is not None:
                errors.append(f"node {label!r}: only one robot app is supported")
                continue
            geometry_raw = app.get("geometry", {})
            controller_raw = app.get("controller", {})
            try:
                geometry = RobotGeometry(
                    geometry_raw.get("wheel_radius_m", 0.05),
                    geometry_raw.get("wheelbase_m", 0.4),
                    geometry_raw.get("encoder_ppr", 400),
                )
            except ValueError as exc:
                errors.append(f"node {label!r}: {exc}")
                continue
            controller = ControllerParams(
                controller_raw.get("cruise_speed_mps", 0.25),
                controller_raw.get("turn_rate_rps", 0.5),
                controller_raw.get("position_tol_m", 0.01),
                math.radians(controller_raw.get("heading_tol_deg", 0.5)),
            )
            pose_raw = app.get("initial_pose", [0.0, 0.0, 0.0])
            robot_app = RobotAppConfig(
                label, wire_id, geometry, controller,
                app.get("control_period_ms", 10.0),
                app.get("report_period_ms", 500.0),
                Pose(*pose_raw),
            )
        else:
            errors.append(f"node {label!r}: unknown app kind {kind!r}")
    return temp_apps, robot_app


def parse_scenario_dict(raw: dict, name: str = "<dict>") -> ScenarioConfig:
    errors: list[str] = []
    if not isinstance(raw, dict) or not raw:
        raise ScenarioError(["scenario document is empty"])

    raw_nodes = raw.get("nodes", [])
    if not raw_nodes:
        errors.append("scenario has no nodes")
    specs, node_ids = _parse_nodes(raw_nodes, errors)
    temp_apps, robot_app = _parse_apps(raw_nodes, node_ids, errors)

    links_down = []
    for pair in raw.get("links_down", []):
        if len(pair) != 2 or pair[0] not in node_ids or pair[1] not in node_ids:
            errors.append(f"links_down {pair}: unknown node")
        else:
            links_down.append((pair[0], pair[1]))

    delay_raw = raw.get("delay", {})
    delay_params = None
    calibration_rows = None
    try:
        if "params" in delay_raw:
            p = delay_raw["params"]
            delay_params = DelayParams(p["t_base_ms"], p["t_hop_ms"], p["k_ms_per_m"])
        elif "calibration_rows" in delay_raw:
            calibration_rows = [tuple(r) for r in delay_raw["calibration_rows"]]
            delay_params = calibrate_delay_params(calibration_rows)
        else:
            errors.append("delay: needs either params or calibration_rows")
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"delay: {exc}")
    if delay_params is None:
        delay_params = DelayParams(0, 0, 0)

    failures = []
    for f in raw.get("failures", []):
        target = f.get("node") or f.get("link")
        if "node" in f and f["node"] not in node_ids:
            errors.append(f"failures: unknown node {f['node']!r}")
        elif "link" in f and any(n not in node_ids for n in f["link"]):
            errors.append(f"failures: unknown link {f['link']}")
        elif target is None or "at_ms" not in f:
            errors.append(f"failures entry {f}: needs at_ms and node or link")
        else:
            failures.append(f)

    waypoints = []
    for w in raw.get("waypoints", []):
        if robot_app is None:
            errors.append(f"waypoints entry {w}: scenario has no robot node")
        elif not {"at_ms", "x", "y"} <= set(w):
            errors.append(f"waypoints entry {w}: needs at_ms, x, y")
        else:
            waypoints.append(w)

    duration_s = raw.get("duration_s", 60.0)
    if duration_s <= 0:
        errors.append(f"duration_s must be > 0, got {duration_s}")

    speed = raw.get("speed", "fast")
    if speed not in ("fast", "realtime"):
        errors.append(f"speed must be fast or realtime, got {speed!r}")

    pan_id = raw.get("pan_id", 0x1122334455667788)
    if isinstance(pan_id, str):
        pan_id = int(pan_id, 0)

    gw_raw = raw.get("gateway", {})
    log_epoch = DEFAULT_LOG_EPOCH
    if "log_epoch" in gw_raw:
        try:
            log_epoch = datetime.fromisoformat(gw_raw["log_epoch"])
        except ValueError as exc:
            errors.append(f"gateway.log_epoch: {exc}")

    if errors:
        raise ScenarioError(errors)
    return ScenarioConfig(
        name=name,
        pan_id=pan_id,
        permit_join=raw.get("permit_join", True),
        nodes=specs,
        links_down=links_down,
        delay_params=delay_params,
        temp_apps=temp_apps,
        robot_app=robot_app,
        failures=failures,
        waypoints=waypoints,
        seed=raw.get("seed", 0),
        duration_s=float(duration_s),
        jitter=raw.get("jitter", False),
        speed=speed,
        log_epoch=log_epoch,
        expected_cadence_ms=gw_raw.get("expected_cadence_ms", 500.0),
        calibration_rows=calibration_rows,
    )


def parse_scenario(path: str) -> ScenarioConfig:
    """Load a scenario from a file path or a bundled name."""
    if path in BUNDLED_SCENARIOS:
        text = resources.files("meshbed.scenarios").joinpath(f"{path}.json").read_text()
        name = path
    else:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
        name = path
    if not text.strip():
        raise ScenarioError([f"{name}: scenario file is empty"])
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{name}: not valid JSON ({exc})"]) from exc
    return parse_scenario_dict(raw, name)


class Testbed:
    """A fully wired simulation: network, apps, gateway."""

    __test__ = False  # not a pytest class, despite the name

    def __init__(self, config: ScenarioConfig, log_path: str | None = None, seed: int | None = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        topology = build_topology(
            config.nodes, config.pan_id, config.links_down, config.permit_join
        )
        self.network = Network(topology, config.delay_params, config.jitter, self.seed)
        robot_app = config.robot_app
        self.gateway = Gateway(
            self.network,
            robot_node=robot_app.node if robot_app else None,
            robot_wire_id=robot_app.wire_id if robot_app else 3,
            registry=config.gateway_registry(),
            log_epoch=config.log_epoch,
            log_path=log_path,
            expected_cadence_ms=config.expected_cadence_ms,
        )
        self.temp_nodes = [
            TemperatureNode(
                self.network, app.node, app.wire_id, app.ambient,
                app.sample_period_ms, app.adc_noise,
            )
            for app in config.temp_apps
        ]
        self.robot = None
        if robot_app is not None:
            self.robot = RobotNode(
                self.network, robot_app.node, robot_app.wire_id,
                robot_app.geometry, robot_app.controller,
                robot_app.control_period_ms, robot_app.report_period_ms,
                robot_app.initial_pose,
            )
        for node in self.temp_nodes:
            node.start()
        if self.robot is not None:
            self.robot.start()
        self._schedule_script()

    def _schedule_script(self) -> None:
        net = self.network
        for f in self.config.failures:
            if "node" in f:
                node = f["node"]
                net.schedule(f["at_ms"], "scripted_failure", lambda n=node: net.fail_node(n), src=node)
            else:
                a, b = f["link"]
                net.schedule(f["at_ms"], "scripted_failure", lambda a=a, b=b: net.fail_link(a, b), src=a, dst=b)
        for w in self.config.waypoints:
            x, y = w["x"], w["y"]
            net.schedule(
                w["at_ms"], "scripted_waypoint",
                lambda x=x, y=y: self._dispatch_waypoint(x, y),
                detail=f"({x},{y})",
            )

    def _dispatch_waypoint(self, x: int, y: int) -> None:
        try:
            self.gateway.send_waypoint(x, y)
        except (DispatchError, ValueError) as exc:
            self.network._log("waypoint_error", "-", "-", str(exc))

    def run(self, duration_s: float | None = None, realtime: bool = False, service=None) -> None:
        """Drive the event loop to the end of the scenario.

        Realtime mode paces events against the wall clock and polls the
        service command queue while waiting; fast mode drains as quickly as
        Python allows.  Simulation-time behaviour is identical in both.
        """
        end_ms = (duration_s if duration_s is not None else self.config.duration_s) * 1000.0
        wall_start = time.monotonic()
        while True:
            if service is not None:
                for x, y in service.pop_commands():
                    self._dispatch_waypoint(x, y)
            next_time = self.network.queue.peek_time()
            if next_time is None or next_time > end_ms:
                break
            if realtime:
                lag = wall_start + next_time / 1000.0 - time.monotonic()
                if lag > 0:
                    time.sleep(min(lag, 0.05))
                    continue  # re-poll commands before dispatching
            self.network.step()
        self.network.now = max(self.network.now, end_ms)

    def event_log_text(self) -> str:
        return "\n".join(self.network.log) + "\n"

    def close(self) -> None:
        self.gateway.csv.close()


@dataclass
class DelayTableRow:
    sensor: str
    distance_m: float
    hops: int
    paper_ms: float | None
    measured_ms: float | None  # None = delivery failed
    trials: int = 1


def reproduce_table(config: ScenarioConfig, trials: int = 1, jitter: bool | None = None) -> list[DelayTableRow]:
    """Measure first-frame uplink delay per sensor against the paper rows.

    Runs the scenario (jitter optional, several seeded trials if asked) and
    reports the mean measured delay for every application node, next to the
    calibration row with the same hop count and path length when one exists.
    """
    samples: dict[str, list[float]] = {}
    route_info: dict[str, tuple[float, int, float]] = {}
    for trial in range(trials):
        bed = Testbed(config, seed=config.seed + trial)
        if jitter is not None:
            bed.network.jitter = jitter
        bed.run(duration_s=min(config.duration_s, 1.5))
        topo = bed.network.topology
        routes = bed.network.routes
        app_nodes = [app.node for app in config.temp_apps]
        if config.robot_app is not None:
            app_nodes.append(config.robot_app.node)
        for node in sorted(app_nodes):
            first = next((d for d in bed.network.deliveries if d.src == node), None)
            path = routes.path(node, topo.coordinator_id)
            meters = 0.0
            if path is not None:
                meters = sum(topo.distance(a, b) for a, b in zip(path, path[1:]))
            route_info[node] = (
                topo.distance(node, topo.coordinator_id),
                routes.hops.get(node, 0),
                meters,
            )
            if first is not None:
                samples.setdefault(node, []).append(first.t_arrive - first.t_send)
        bed.close()

    paper_by_route = {(h, m): d for h, m, d in (config.calibration_rows or [])}
    rows = []
    for node in sorted(route_info):
        distance, hops, meters = route_info[node]
        measured = samples.get(node)
        mean = sum(measured) / len(measured) if measured else None
        rows.append(
            DelayTableRow(node, distance, hops, paper_by_route.get((hops, meters)), mean, trials)
        )
    return rows


def render_delay_table(rows: list[DelayTableRow]) -> str:
    header = f"{'SENSOR':<10} {'DIST_M':>7} {'HOPS':>4} {'PAPER_MS':>9} {'MEASURED_MS':>12}"
    lines = [header, "-" * len(header)]
    for row in rows:
        paper = f"{row.paper_ms:.0f}" if row.paper_ms is not None else "-"
        measured = f"{row.measured_ms:.3f}" if row.measured_ms is not None else "FAILED"
        lines.append(
            f"{row.sensor:<10} {row.distance_m:>7.1f} {row.hops:>4d} {paper:>9} {measured:>12}"
        )
    return "\n".join(lines)
