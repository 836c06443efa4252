"""Deterministic discrete-event simulation of the personal-area network.

Nodes carry one of three roles (coordinator, router, end device) and link up
whenever their distance is within both radio ranges.  Frames travel hop by
hop along shortest-hop routes toward/from the single coordinator; latency is
a linear model ``t_base + hops*t_hop + meters*k`` calibrated from measured
delay rows.  End devices duty-cycle their radios: frames addressed to a
sleeping device queue at its parent and drain, in order, at the next wake.
"""

import heapq
import itertools
import math
import random
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .frames import Frame

ROLE_COORDINATOR = "coordinator"
ROLE_ROUTER = "router"
ROLE_END_DEVICE = "end_device"
ROLES = (ROLE_COORDINATOR, ROLE_ROUTER, ROLE_END_DEVICE)

SLEEP_BUFFER_CAPACITY = 16
JITTER_SPAN = 0.05  # +-5% uniform, per hop


class TopologyError(ValueError):
    """Invalid topology description (roles, duplicates, connectivity)."""


class CalibrationError(ValueError):
    """Delay calibration rows do not determine the linear model."""


class SimulationError(RuntimeError):
    """The simulation cannot continue (past-time event, dead coordinator)."""


@dataclass(frozen=True)
class SleepSchedule:
    period_ms: float
    awake_ms: float

    def __post_init__(self):
        if self.period_ms <= 0 or not 0 < self.awake_ms <= self.period_ms:
            raise TopologyError("sleep schedule needs 0 < awake <= period")


@dataclass(frozen=True)
class NodeSpec:
    id: str
    role: str
    position: tuple[float, float]
    radio_range: float
    sleep: SleepSchedule | None = None
    pan_id: int | None = None  # defaults to the topology PAN id


@dataclass
class Topology:
    pan_id: int
    nodes: dict[str, NodeSpec]
    links_down: set[frozenset[str]] = field(default_factory=set)
    nodes_down: set[str] = field(default_factory=set)
    coordinator_id: str = ""

    def distance(self, a: str, b: str) -> float:
        return math.dist(self.nodes[a].position, self.nodes[b].position)

    def link_up(self, a: str, b: str) -> bool:
        if a in self.nodes_down or b in self.nodes_down:
            return False
        if frozenset((a, b)) in self.links_down:
            return False
        na, nb = self.nodes[a], self.nodes[b]
        return self.distance(a, b) <= min(na.radio_range, nb.radio_range)

    def neighbors(self, node_id: str) -> list[str]:
        return sorted(
            other
            for other in self.nodes
            if other != node_id
            and other not in self.nodes_down
            and self.link_up(node_id, other)
        )


def build_topology(
    nodes: list[NodeSpec],
    pan_id: int = 0x1122334455667788,
    links_down: list[tuple[str, str]] | None = None,
    permit_join: bool = True,
) -> Topology:
    """Validate a node census and return a connected topology.

    The join procedure is reduced to its observable core: every member must
    carry the coordinator's PAN id and the coordinator must permit joining;
    anything else is a build error naming the offending node.
    """
    seen: dict[str, NodeSpec] = {}
    coordinators = []
    for spec in nodes:
        if spec.id in seen:
            raise TopologyError(f"duplicate node id {spec.id!r}")
        if spec.role not in ROLES:
            raise TopologyError(f"node {spec.id!r} has unknown role {spec.role!r}")
        if spec.radio_range <= 0:
            raise TopologyError(f"node {spec.id!r} needs radio_range > 0")
        if spec.sleep is not None and spec.role != ROLE_END_DEVICE:
            raise TopologyError(f"only end devices may sleep, not {spec.id!r}")
        if spec.role == ROLE_COORDINATOR:
            coordinators.append(spec.id)
        seen[spec.id] = spec
    if len(coordinators) == 0:
        raise TopologyError("topology has no coordinator")
    if len(coordinators) > 1:
        raise TopologyError(f"topology has {len(coordinators)} coordinators: {coordinators}")
    coordinator = coordinators[0]

    for spec in nodes:
        if spec.id == coordinator:
            continue
        if spec.pan_id is not None and spec.pan_id != pan_id:
            raise TopologyError(
                f"node {spec.id!r} carries PAN id {spec.pan_id:#x}, network is {pan_id:#x}"
            )
        if not permit_join:
            raise TopologyError(f"coordinator does not permit {spec.id!r} to join")

    topo = Topology(
        pan_id=pan_id,
        nodes=seen,
        links_down={frozenset(pair) for pair in (links_down or [])},
        coordinator_id=coordinator,
    )
    routes = compute_routes(topo)
    if routes.unreachable:
        raise TopologyError(
            f"nodes without a path to the coordinator: {sorted(routes.unreachable)}"
        )
    return topo


@dataclass
class RoutingTable:
    """Shortest-hop next hops toward the coordinator (BFS tree)."""

    coordinator_id: str
    parent: dict[str, str | None]
    hops: dict[str, int]
    unreachable: list[str]

    def path_to_coordinator(self, node_id: str) -> list[str] | None:
        if node_id not in self.hops:
            return None
        path = [node_id]
        while path[-1] != self.coordinator_id:
            nxt = self.parent[path[-1]]
            if nxt is None:
                return None
            path.append(nxt)
        return path

    def path(self, src: str, dst: str) -> list[str] | None:
        if src == dst:
            return [src]
        down = self.path_to_coordinator(dst)
        if down is not None and src in down:
            i = down.index(src)
            return list(reversed(down[: i + 1]))
        up = self.path_to_coordinator(src)
        if up is None or down is None:
            return None
        # climb toward the coordinator until we meet dst's tree path
        down_index = {n: i for i, n in enumerate(down)}
        for j, node in enumerate(up):
            if node in down_index:
                return up[: j + 1] + list(reversed(down[: down_index[node]]))
        return None

    def next_hop(self, current: str, dst: str) -> str | None:
        route = self.path(current, dst)
        if route is None or len(route) < 2:
            return None
        return route[1]


def compute_routes(topology: Topology) -> RoutingTable:
    """Breadth-first shortest-hop routes over up links.

    Ties between equal-hop parents break toward the lowest node id, so the
    tree is unique and two runs see identical routing.
    """
    coord = topology.coordinator_id
    parent: dict[str, str | None] = {coord: None}
    hops = {coord: 0}
    frontier = deque([coord])
    while frontier:
        node = frontier.popleft()
        for neigh in topology.neighbors(node):
            if neigh not in hops:
                hops[neigh] = hops[node] + 1
                parent[neigh] = node
                frontier.append(neigh)
            elif hops[neigh] == hops[node] + 1 and node < parent[neigh]:
                parent[neigh] = node
    if coord in topology.nodes_down:
        parent, hops = {}, {}
    unreachable = [
        n for n in topology.nodes if n not in hops and n not in topology.nodes_down
    ]
    return RoutingTable(coord, parent, hops, sorted(unreachable))


@dataclass(frozen=True)
class DelayParams:
    t_base_ms: float
    t_hop_ms: float
    k_ms_per_m: float

    def __post_init__(self):
        if min(self.t_base_ms, self.t_hop_ms, self.k_ms_per_m) < 0:
            raise CalibrationError("delay parameters must be >= 0")


def delay_from_counts(hops: int, meters: float, params: DelayParams) -> float:
    return params.t_base_ms + hops * params.t_hop_ms + meters * params.k_ms_per_m


def path_delay(path_positions: list[tuple[float, float]], params: DelayParams) -> float:
    """End-to-end latency of a geometric path: base + per-hop + per-meter."""
    if len(path_positions) < 2:
        raise ValueError("path needs at least two nodes")
    meters = 0.0
    for a, b in zip(path_positions, path_positions[1:]):
        meters += math.dist(a, b)
    return delay_from_counts(len(path_positions) - 1, meters, params)


def calibrate_delay_params(rows: list[tuple[int, float, float]]) -> DelayParams:
    """Fit (t_base, t_hop, k) so the model reproduces three measured rows."""
    if len(rows) != 3:
        raise CalibrationError(f"need exactly 3 rows, got {len(rows)}")
    a = np.array([[1.0, h, m] for h, m, _ in rows])
    b = np.array([d for _, _, d in rows])
    if abs(np.linalg.det(a)) < 1e-9:
        raise CalibrationError("calibration rows are affinely dependent")
    t_base, t_hop, k = np.linalg.solve(a, b)
    return DelayParams(float(t_base), float(t_hop), float(k))


# rows measured in the real deployment: (hops, path meters, delay ms)
MEASURED_DELAY_ROWS: list[tuple[int, float, float]] = [
    (1, 5.0, 170.0),
    (2, 11.0, 312.0),
    (2, 17.0, 380.0),
]


def reference_nodes() -> list[NodeSpec]:
    """The deployed six-node layout, collinear so that path length along the
    routing tree equals each node's distance from the coordinator."""
    return [
        NodeSpec("coordinator", ROLE_COORDINATOR, (0.0, 0.0), 14.0),
        NodeSpec("router1", ROLE_ROUTER, (14.0, 0.0), 14.0),
        NodeSpec("router2", ROLE_ROUTER, (8.0, 0.0), 8.0),
        NodeSpec("node1", ROLE_END_DEVICE, (17.0, 0.0), 3.0, SleepSchedule(500, 50)),
        NodeSpec("node2", ROLE_END_DEVICE, (11.0, 0.0), 3.0, SleepSchedule(500, 50)),
        NodeSpec("robot", ROLE_END_DEVICE, (5.0, 0.0), 5.0, SleepSchedule(500, 50)),
    ]


def reference_topology() -> Topology:
    # node2 sits 3 m from both routers; the deployment parented it to
    # router2, so the router1 link is forced down explicitly.
    return build_topology(reference_nodes(), links_down=[("node2", "router1")])


@dataclass(order=True)
class _Event:
    time: float
    seq: int
    kind: str = field(compare=False)
    src: str = field(compare=False)
    dst: str = field(compare=False)
    detail: str = field(compare=False)
    action: object = field(compare=False, default=None)


class EventQueue:
    """Total-ordered (time, insertion sequence) event heap."""

    def __init__(self):
        self._heap: list[_Event] = []
        self._seq = itertools.count()

    def push(self, time: float, kind: str, src: str, dst: str, detail: str, action) -> None:
        heapq.heappush(self._heap, _Event(time, next(self._seq), kind, src, dst, detail, action))

    def pop(self) -> _Event:
        return heapq.heappop(self._heap)

    def peek_time(self) -> float | None:
        return self._heap[0].time if self._heap else None

    def __len__(self):
        return len(self._heap)


@dataclass
class Counters:
    sent: int = 0
    delivered: int = 0
    in_flight: int = 0
    buffered: int = 0
    dropped: int = 0
    failed: int = 0

    def conserved(self) -> bool:
        return self.sent == (
            self.delivered + self.in_flight + self.buffered + self.dropped + self.failed
        )


@dataclass
class _Transit:
    frame_id: int
    frame: Frame
    origin: str
    dst: str
    t_send: float
    hops: int = 0
    meters: float = 0.0
    rebased: bool = False  # set once buffered; switches to incremental timing


@dataclass(frozen=True)
class Delivery:
    frame_id: int
    frame: Frame
    src: str
    dst: str
    t_send: float
    t_arrive: float


class Network:
    """The event-driven network engine.

    Single logical thread: one owner calls :meth:`step` / :meth:`run_until`;
    node handlers run inside that loop.  All randomness comes from per-node
    streams derived from one seed.
    """

    def __init__(
        self,
        topology: Topology,
        params: DelayParams,
        jitter: bool = False,
        seed: int = 0,
    ):
        self.topology = topology
        self.params = params
        self.jitter = jitter
        self.seed = seed
        self.routes = compute_routes(topology)
        self.queue = EventQueue()
        self.now = 0.0
        self.counters = Counters()
        self.log: list[str] = []
        self.deliveries: list[Delivery] = []
        self.failures: list[tuple[float, int, str]] = []  # (time, frame_id, reason)
        self.drop_counts: dict[str, int] = {}
        self._handlers: dict[str, object] = {}
        self._asleep: set[str] = set()
        self._next_wake: dict[str, float] = {}
        self._buffers: dict[str, deque[tuple[str, _Transit]]] = {}
        self._frame_ids = itertools.count(1)
        self._jitter_rngs: dict[str, random.Random] = {}
        for spec in topology.nodes.values():
            if spec.sleep is not None:
                self._schedule_wake(spec.id, 0.0)

    # -- wiring ----------------------------------------------------------

    def set_handler(self, node_id: str, handler) -> None:
        """handler(frame: Frame, time_ms: float) called on each delivery."""
        self._handlers[node_id] = handler

    def node_rng(self, node_id: str, purpose: str) -> random.Random:
        # string seeding keeps streams stable across runs and platforms
        return random.Random(f"{self.seed}/{purpose}/{node_id}")

    # -- event core ------------------------------------------------------

    def schedule(self, time: float, kind: str, action, src: str = "-", dst: str = "-", detail: str = "") -> None:
        if time < self.now:
            raise SimulationError(f"event at {time} is before now={self.now}")
        self.queue.push(time, kind, src, dst, detail, action)

    def step(self) -> bool:
        """Dispatch the next event; False when the queue is exhausted."""
        if len(self.queue) == 0:
            return False
        event = self.queue.pop()
        self.now = event.time
        self._log(event.kind, event.src, event.dst, event.detail)
        if event.action is not None:
            event.action()
        return True

    def run_until(self, t_end_ms: float) -> None:
        while True:
            nxt = self.queue.peek_time()
            if nxt is None or nxt > t_end_ms:
                break
            self.step()
        self.now = max(self.now, t_end_ms)

    def _log(self, kind: str, src: str, dst: str, detail: str) -> None:
        seq = len(self.log)
        self.log.append(f"{self.now:.3f} {seq} {kind} {src} {dst} {detail}".rstrip())

    # -- transmission ----------------------------------------------------

    def send_frame(self, src: str, dst: str, frame: Frame) -> int:
        if src not in self.topology.nodes or dst not in self.topology.nodes:
            raise SimulationError(f"unknown endpoint {src!r} or {dst!r}")
        if src in self._asleep:
            # a sleeping radio cannot transmit; retry at the next wake
            t_wake = self._next_wake[src]
            self.schedule(
                t_wake, "tx_deferred", lambda: self.send_frame(src, dst, frame),
                src=src, dst=dst,
            )
            return 0
        frame_id = next(self._frame_ids)
        self.counters.sent += 1
        self._log("send", src, dst, f"frame={frame_id} node_id={frame.node_id}")
        transit = _Transit(frame_id, frame, src, dst, self.now)
        self._forward(transit, src)
        return frame_id

    def _fail_frame(self, transit: _Transit, reason: str) -> None:
        self.counters.failed += 1
        self.failures.append((self.now, transit.frame_id, reason))
        self._log("deliver_failed", transit.origin, transit.dst, f"frame={transit.frame_id} reason={reason}")

    def _forward(self, transit: _Transit, at_node: str) -> None:
        if at_node in self.topology.nodes_down:
            self._fail_frame(transit, f"node_down:{at_node}")
            return
        nxt = self.routes.next_hop(at_node, transit.dst)
        if nxt is None:
            self._fail_frame(transit, "no_route")
            return
        if self.topology.nodes[nxt].role == ROLE_END_DEVICE and nxt in self._asleep:
            self._buffer(transit, at_node, nxt)
            return
        self._hop(transit, at_node, nxt)

    def _hop(self, transit: _Transit, from_node: str, to_node: str) -> None:
        dist = self.topology.distance(from_node, to_node)
        transit.hops += 1
        transit.meters += dist
        if self.jitter:
            rng = self._jitter_rngs.setdefault(
                from_node, self.node_rng(from_node, "jitter")
            )
            factor = rng.uniform(1.0 - JITTER_SPAN, 1.0 + JITTER_SPAN)
            base = self.params.t_base_ms if transit.hops == 1 and not transit.rebased else 0.0
            arrival = self.now + base + (self.params.t_hop_ms + dist * self.params.k_ms_per_m) * factor
        elif transit.rebased:
            arrival = self.now + self.params.t_hop_ms + dist * self.params.k_ms_per_m
        else:
            # one expression over accumulated totals, so the final arrival
            # equals path_delay() of the route actually taken, float-exactly
            arrival = transit.t_send + delay_from_counts(transit.hops, transit.meters, self.params)
        self.counters.in_flight += 1
        self.schedule(
            arrival,
            "arrive",
            lambda: self._arrive(transit, from_node, to_node),
            src=from_node,
            dst=to_node,
            detail=f"frame={transit.frame_id}",
        )

    def _arrive(self, transit: _Transit, from_node: str, to_node: str) -> None:
        self.counters.in_flight -= 1
        if not self.topology.link_up(from_node, to_node):
            self._fail_frame(transit, f"lost_in_transit:{from_node}-{to_node}")
            return
        if to_node == transit.dst:
            self.counters.delivered += 1
            self.deliveries.append(
                Delivery(transit.frame_id, transit.frame, transit.origin, transit.dst, transit.t_send, self.now)
            )
            self._log("deliver", transit.origin, to_node, f"frame={transit.frame_id} latency={self.now - transit.t_send:.3f}")
            handler = self._handlers.get(to_node)
            if handler is not None:
                handler(transit.frame, self.now)
            return
        self._forward(transit, to_node)

    # -- sleep / buffering -------------------------------------------------

    def is_asleep(self, node_id: str) -> bool:
        return node_id in self._asleep

    def _buffer(self, transit: _Transit, parent: str, child: str) -> None:
        queue = self._buffers.setdefault(child, deque())
        queue.append((parent, transit))
        self.counters.buffered += 1
        self._log("buffer", parent, child, f"frame={transit.frame_id} queued={len(queue)}")
        if len(queue) > SLEEP_BUFFER_CAPACITY:
            _, oldest = queue.popleft()
            self.counters.buffered -= 1
            self.counters.dropped += 1
            self.drop_counts[child] = self.drop_counts.get(child, 0) + 1
            self._log("buffer_drop", parent, child, f"frame={oldest.frame_id} drops={self.drop_counts[child]}")

    def _schedule_wake(self, node_id: str, t_wake: float) -> None:
        self._asleep.add(node_id)
        self._next_wake[node_id] = t_wake
        self.schedule(t_wake, "wake", lambda: self._wake(node_id), src=node_id)

    def _wake(self, node_id: str) -> None:
        spec = self.topology.nodes[node_id]
        self._asleep.discard(node_id)
        queue = self._buffers.get(node_id)
        while queue:
            parent, transit = queue.popleft()
            self.counters.buffered -= 1
            transit.rebased = True
            if parent in self.topology.nodes_down or not self.topology.link_up(parent, node_id):
                self._fail_frame(transit, "no_route_after_wake")
                continue
            self._hop(transit, parent, node_id)
        self.schedule(
            self.now + spec.sleep.awake_ms,
            "sleep",
            lambda: self._sleep(node_id),
            src=node_id,
        )

    def _sleep(self, node_id: str) -> None:
        spec = self.topology.nodes[node_id]
        next_wake = self.now - spec.sleep.awake_ms + spec.sleep.period_ms
        self._schedule_wake(node_id, next_wake)

    # -- failures ----------------------------------------------------------

    def fail_link(self, a: str, b: str) -> RoutingTable:
        if a not in self.topology.nodes or b not in self.topology.nodes:
            raise SimulationError(f"unknown link endpoint {a!r}-{b!r}")
        self.topology.links_down.add(frozenset((a, b)))
        self._log("link_down", a, b, "")
        self.routes = compute_routes(self.topology)
        return self.routes

    def fail_node(self, node_id: str) -> RoutingTable:
        if node_id not in self.topology.nodes:
            raise SimulationError(f"unknown node {node_id!r}")
        if node_id == self.topology.coordinator_id:
            raise SimulationError("coordinator failure ends the network")
        self.topology.nodes_down.add(node_id)
        self._log("node_down", node_id, "-", "")
        self.routes = compute_routes(self.topology)
        return self.routes
