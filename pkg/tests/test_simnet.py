import math
from collections import deque

import pytest

from meshbed.frames import Frame
from meshbed.simnet import (
    MEASURED_DELAY_ROWS,
    CalibrationError,
    DelayParams,
    Network,
    NodeSpec,
    SimulationError,
    SleepSchedule,
    Topology,
    TopologyError,
    build_topology,
    calibrate_delay_params,
    compute_routes,
    delay_from_counts,
    path_delay,
    reference_topology,
)


def bfs_oracle(topology):
    """Independent shortest-hop distances over up links (plain deque BFS)."""
    coord = topology.coordinator_id
    dist = {coord: 0}
    frontier = deque([coord])
    while frontier:
        node = frontier.popleft()
        for other in topology.nodes:
            if other in dist or other in topology.nodes_down:
                continue
            if topology.link_up(node, other):
                dist[other] = dist[node] + 1
                frontier.append(other)
    return dist


def calibrated() -> DelayParams:
    return calibrate_delay_params(MEASURED_DELAY_ROWS)


class TestTopology:
    def test_reference_scenario(self):
        topo = reference_topology()
        assert len(topo.nodes) == 6
        routes = compute_routes(topo)
        assert routes.hops["node1"] == 2
        assert routes.hops["robot"] == 1
        assert routes.parent["node1"] == "router1"
        assert routes.parent["node2"] == "router2"
        assert routes.parent["robot"] == "coordinator"

    def test_single_coordinator_topology(self):
        topo = build_topology([NodeSpec("c", "coordinator", (0, 0), 10.0)])
        assert compute_routes(topo).hops == {"c": 0}

    def test_two_coordinators_rejected(self):
        with pytest.raises(TopologyError, match="2 coordinators"):
            build_topology(
                [
                    NodeSpec("c1", "coordinator", (0, 0), 10.0),
                    NodeSpec("c2", "coordinator", (1, 0), 10.0),
                ]
            )

    def test_no_coordinator_rejected(self):
        with pytest.raises(TopologyError, match="no coordinator"):
            build_topology([NodeSpec("r", "router", (0, 0), 10.0)])

    def test_duplicate_id_rejected(self):
        with pytest.raises(TopologyError, match="duplicate"):
            build_topology(
                [
                    NodeSpec("c", "coordinator", (0, 0), 10.0),
                    NodeSpec("c", "router", (1, 0), 10.0),
                ]
            )

    def test_disconnected_node_named(self):
        with pytest.raises(TopologyError, match="far"):
            build_topology(
                [
                    NodeSpec("c", "coordinator", (0, 0), 10.0),
                    NodeSpec("far", "end_device", (100, 0), 5.0),
                ]
            )

    def test_pan_id_mismatch_rejected(self):
        with pytest.raises(TopologyError, match="PAN"):
            build_topology(
                [
                    NodeSpec("c", "coordinator", (0, 0), 10.0),
                    NodeSpec("e", "end_device", (1, 0), 10.0, pan_id=0xDEAD),
                ],
                pan_id=0xBEEF,
            )

    def test_permit_join_false_rejected(self):
        with pytest.raises(TopologyError, match="permit"):
            build_topology(
                [
                    NodeSpec("c", "coordinator", (0, 0), 10.0),
                    NodeSpec("e", "end_device", (1, 0), 10.0),
                ],
                permit_join=False,
            )

    def test_sleep_only_on_end_devices(self):
        with pytest.raises(TopologyError, match="sleep"):
            build_topology(
                [
                    NodeSpec("c", "coordinator", (0, 0), 10.0),
                    NodeSpec("r", "router", (1, 0), 10.0, sleep=SleepSchedule(500, 50)),
                ]
            )


class TestRouting:
    def test_matches_bfs_oracle_on_reference(self):
        topo = reference_topology()
        routes = compute_routes(topo)
        assert routes.hops == bfs_oracle(topo)

    def test_matches_bfs_oracle_after_mutations(self):
        topo = reference_topology()
        topo.nodes_down.add("router1")
        routes = compute_routes(topo)
        oracle = bfs_oracle(topo)
        for node, hops in oracle.items():
            assert routes.hops[node] == hops
        assert "node1" in routes.unreachable

    def test_tie_breaks_to_lowest_id(self):
        nodes = [
            NodeSpec("c", "coordinator", (0, 0), 5.0),
            NodeSpec("ra", "router", (0, 5), 5.0),
            NodeSpec("rb", "router", (5, 0), 5.0),
            NodeSpec("e", "end_device", (4, 4), 5.0),
        ]
        topo = build_topology(nodes)
        routes = compute_routes(topo)
        assert routes.hops["e"] == 2
        assert routes.parent["e"] == "ra"

    def test_coordinator_only_empty_table(self):
        topo = build_topology([NodeSpec("c", "coordinator", (0, 0), 10.0)])
        routes = compute_routes(topo)
        assert routes.path("c", "c") == ["c"]
        assert routes.hops == {"c": 0}

    def test_downlink_path_from_intermediate_node(self):
        routes = compute_routes(reference_topology())
        assert routes.path("coordinator", "node1") == ["coordinator", "router1", "node1"]
        # a router already on the tree path must not hairpin via the coordinator
        assert routes.path("router1", "node1") == ["router1", "node1"]
        assert routes.next_hop("router1", "node1") == "node1"


class TestDelayModel:
    def test_calibration_recovers_paper_rows(self):
        params = calibrated()
        # hand-solved 3x3 system: t_base = 118/3, t_hop = 74, k = 34/3
        assert params.t_base_ms == pytest.approx(118 / 3, abs=1e-9)
        assert params.t_hop_ms == pytest.approx(74.0, abs=1e-9)
        assert params.k_ms_per_m == pytest.approx(34 / 3, abs=1e-9)
        for hops, meters, delay in MEASURED_DELAY_ROWS:
            assert delay_from_counts(hops, meters, params) == pytest.approx(delay, abs=1e-9)

    def test_calibration_round_trip(self):
        truth = DelayParams(10.0, 20.0, 3.0)
        rows = [
            (h, m, delay_from_counts(h, m, truth))
            for h, m in [(1, 4.0), (2, 9.0), (3, 10.0)]
        ]
        fitted = calibrate_delay_params(rows)
        assert fitted.t_base_ms == pytest.approx(10.0)
        assert fitted.t_hop_ms == pytest.approx(20.0)
        assert fitted.k_ms_per_m == pytest.approx(3.0)

    def test_singular_rows_rejected(self):
        with pytest.raises(CalibrationError):
            calibrate_delay_params([(1, 5, 170), (1, 5, 170), (2, 17, 380)])

    def test_path_delay_reference_paths(self):
        params = calibrated()
        topo = reference_topology()
        pos = {n: s.position for n, s in topo.nodes.items()}
        robot_path = [pos["robot"], pos["coordinator"]]
        node1_path = [pos["node1"], pos["router1"], pos["coordinator"]]
        assert path_delay(robot_path, params) == pytest.approx(170.0, abs=1e-9)
        assert path_delay(node1_path, params) == pytest.approx(380.0, abs=1e-9)

    def test_zero_params_zero_delay(self):
        params = DelayParams(0, 0, 0)
        assert path_delay([(0, 0), (3, 4), (3, 10)], params) == 0.0


def awake_reference_network(**kwargs):
    """Reference layout with sleep disabled, for pure transport tests."""
    nodes = [
        NodeSpec(s.id, s.role, s.position, s.radio_range)
        for s in reference_topology().nodes.values()
    ]
    topo = build_topology(nodes, links_down=[("node2", "router1")])
    return Network(topo, calibrated(), **kwargs)


class TestTransmit:
    def test_uplink_latency_exact(self):
        net = awake_reference_network()
        net.send_frame("node1", "coordinator", Frame(1, bytes([32])))
        net.run_until(1000)
        assert len(net.deliveries) == 1
        d = net.deliveries[0]
        assert d.t_arrive - d.t_send == 380.0

    def test_all_reference_rows(self):
        net = awake_reference_network()
        net.send_frame("node1", "coordinator", Frame(1, bytes([30])))
        net.send_frame("node2", "coordinator", Frame(2, bytes([28])))
        net.send_frame("robot", "coordinator", Frame(3, bytes([0, 0])))
        net.run_until(1000)
        latency = {d.src: d.t_arrive - d.t_send for d in net.deliveries}
        assert latency == {"node1": 380.0, "node2": 312.0, "robot": 170.0}

    def test_downlink_latency(self):
        net = awake_reference_network()
        net.send_frame("coordinator", "robot", Frame(3, bytes([2, 1])))
        net.run_until(1000)
        assert net.deliveries[0].t_arrive == 170.0

    def test_no_route_failure(self):
        net = awake_reference_network()
        net.fail_node("router1")
        net.send_frame("node1", "coordinator", Frame(1, bytes([30])))
        net.run_until(1000)
        assert net.counters.failed == 1
        assert net.failures[0][2] == "no_route"

    def test_delivery_handler_called(self):
        net = awake_reference_network()
        seen = []
        net.set_handler("coordinator", lambda frame, t: seen.append((frame, t)))
        net.send_frame("robot", "coordinator", Frame(3, bytes([1, 0])))
        net.run_until(1000)
        assert seen == [(Frame(3, bytes([1, 0])), 170.0)]

    def test_conservation_throughout(self):
        net = awake_reference_network()
        for i in range(5):
            net.send_frame("node1", "coordinator", Frame(1, bytes([i])))
            net.send_frame("coordinator", "robot", Frame(3, bytes([i, 0])))
        while net.step():
            assert net.counters.conserved()
        assert net.counters.delivered == 10


class TestFailover:
    def variant_network(self):
        # router2 off-axis: node1 reaches both routers, failover path is longer
        nodes = [
            NodeSpec("coordinator", "coordinator", (0.0, 0.0), 14.0),
            NodeSpec("router1", "router", (14.0, 0.0), 14.0),
            NodeSpec("router2", "router", (8.0, 3.0), 10.0),
            NodeSpec("node1", "end_device", (17.0, 0.0), 10.0),
            NodeSpec("node2", "end_device", (11.0, 0.0), 5.0),
            NodeSpec("robot", "end_device", (5.0, 0.0), 5.0),
        ]
        topo = build_topology(nodes)
        return Network(topo, calibrated())

    def test_reroute_after_router_failure(self):
        net = self.variant_network()
        assert net.routes.parent["node1"] == "router1"
        old_meters = 3.0 + 14.0
        routes = net.fail_node("router1")
        assert routes.parent["node1"] == "router2"
        assert routes.hops["node1"] == 2
        new_meters = math.dist((17, 0), (8, 3)) + math.dist((8, 3), (0, 0))
        assert new_meters > old_meters

    def test_frames_flow_after_failover(self):
        net = self.variant_network()
        net.send_frame("node1", "coordinator", Frame(1, bytes([1])))
        net.run_until(1000)
        net.fail_node("router1")
        net.send_frame("node1", "coordinator", Frame(1, bytes([2])))
        net.run_until(2000)
        assert net.counters.delivered == 2
        assert net.counters.failed == 0
        # second delivery took the longer path; arrival is float-exactly
        # t_send + path_delay of the route actually taken
        second = net.deliveries[1]
        expected = path_delay([(17, 0), (8, 3), (0, 0)], net.params)
        assert second.t_arrive == second.t_send + expected

    def test_strict_reference_failure_strands_node1_only(self):
        net = awake_reference_network()
        net.fail_node("router1")
        net.send_frame("node1", "coordinator", Frame(1, bytes([1])))
        net.send_frame("node2", "coordinator", Frame(2, bytes([2])))
        net.send_frame("robot", "coordinator", Frame(3, bytes([0, 0])))
        net.run_until(1000)
        assert net.counters.failed == 1
        assert net.counters.delivered == 2

    def test_unrelated_link_failure_keeps_routes(self):
        net = awake_reference_network()
        before = dict(net.routes.parent)
        routes = net.fail_link("router2", "robot")  # not on any tree path
        assert routes.parent == before

    def test_coordinator_failure_is_an_error(self):
        net = awake_reference_network()
        with pytest.raises(SimulationError):
            net.fail_node("coordinator")

    def test_frame_in_transit_across_failed_link_is_lost(self):
        net = awake_reference_network()
        net.send_frame("coordinator", "robot", Frame(3, bytes([2, 1])))
        # frame is in the air until t=170; kill the link mid-flight
        net.schedule(50, "chaos", lambda: net.fail_link("coordinator", "robot"))
        net.run_until(1000)
        assert net.counters.delivered == 0
        assert net.counters.failed == 1
        assert "lost_in_transit" in net.failures[0][2]
        assert net.counters.conserved()


class TestSleepBuffering:
    def sleepy_network(self):
        nodes = [
            NodeSpec("coordinator", "coordinator", (0, 0), 14.0),
            NodeSpec("robot", "end_device", (5.0, 0.0), 5.0, SleepSchedule(500, 50)),
        ]
        topo = build_topology(nodes)
        return Network(topo, calibrated())

    def test_buffered_until_wake(self):
        net = self.sleepy_network()
        net.run_until(100)  # robot awake [0,50), asleep at 100
        assert net.is_asleep("robot")
        net.send_frame("coordinator", "robot", Frame(3, bytes([2, 1])))
        net.run_until(2000)
        d = net.deliveries[0]
        hop = net.params.t_hop_ms + 5.0 * net.params.k_ms_per_m
        assert d.t_arrive == pytest.approx(500.0 + hop, abs=1e-9)

    def test_fifo_order_over_one_window(self):
        net = self.sleepy_network()
        net.run_until(100)
        for i in range(5):
            net.send_frame("coordinator", "robot", Frame(3, bytes([i, 0])))
        got = []
        net.set_handler("robot", lambda frame, t: got.append(frame.payload[0]))
        net.run_until(2000)
        assert got == [0, 1, 2, 3, 4]

    def test_capacity_drop_engages_at_17th(self):
        net = self.sleepy_network()
        net.run_until(100)
        for i in range(16):
            net.send_frame("coordinator", "robot", Frame(3, bytes([i, 0])))
        assert net.drop_counts.get("robot", 0) == 0
        net.send_frame("coordinator", "robot", Frame(3, bytes([16, 0])))
        assert net.drop_counts["robot"] == 1
        got = []
        net.set_handler("robot", lambda frame, t: got.append(frame.payload[0]))
        net.run_until(2000)
        assert got == list(range(1, 17))  # oldest dropped
        assert net.counters.conserved()

    def test_awake_delivery_not_buffered(self):
        net = self.sleepy_network()
        net.run_until(10)  # inside the [0, 50) awake window
        assert not net.is_asleep("robot")
        net.send_frame("coordinator", "robot", Frame(3, bytes([2, 1])))
        net.run_until(2000)
        assert net.deliveries[0].t_arrive == pytest.approx(10.0 + 170.0, abs=1e-9)

    def test_sleeping_source_defers_transmit(self):
        net = self.sleepy_network()
        net.run_until(100)
        net.send_frame("robot", "coordinator", Frame(3, bytes([1, 1])))
        net.run_until(2000)
        d = net.deliveries[0]
        assert d.t_send == 500.0  # sent at the wake boundary


class TestEventQueue:
    def test_equal_time_dispatch_in_insertion_order(self):
        net = awake_reference_network()
        order = []
        net.schedule(10.0, "tick", lambda: order.append("a"))
        net.schedule(10.0, "tick", lambda: order.append("b"))
        net.run_until(20)
        assert order == ["a", "b"]

    def test_past_insertion_rejected(self):
        net = awake_reference_network()
        net.schedule(10.0, "tick", lambda: None)
        net.run_until(20)
        with pytest.raises(SimulationError):
            net.schedule(5.0, "tick", lambda: None)

    def test_empty_queue_signals_end(self):
        net = awake_reference_network()
        assert net.step() is False

    def test_clock_monotone(self):
        net = awake_reference_network()
        for i in range(4):
            net.send_frame("node1", "coordinator", Frame(1, bytes([i])))
        times = []
        while net.step():
            times.append(net.now)
        assert times == sorted(times)


class TestDeterminism:
    def run_log(self, seed):
        net = awake_reference_network(jitter=True, seed=seed)
        for i in range(3):
            net.schedule(
                i * 100.0,
                "app_tick",
                (lambda i=i: net.send_frame("node1", "coordinator", Frame(1, bytes([i])))),
            )
        net.run_until(3000)
        return "\n".join(net.log)

    def test_same_seed_identical_logs(self):
        assert self.run_log(7) == self.run_log(7)

    def test_different_seed_differs(self):
        assert self.run_log(7) != self.run_log(8)

    def test_jitter_mean_near_nominal(self):
        totals = []
        for seed in range(40):
            net = awake_reference_network(jitter=True, seed=seed)
            net.send_frame("node1", "coordinator", Frame(1, bytes([1])))
            net.run_until(2000)
            totals.append(net.deliveries[0].t_arrive)
        mean = sum(totals) / len(totals)
        assert abs(mean - 380.0) / 380.0 < 0.05
