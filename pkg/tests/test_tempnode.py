import random

import pytest

from meshbed.frames import Frame
from meshbed.simnet import Network, NodeSpec, build_topology, calibrate_delay_params, MEASURED_DELAY_ROWS
from meshbed.tempnode import (
    AmbientModel,
    AmbientWalk,
    TemperatureNode,
    adc_sample,
    counts_to_celsius,
    temperature_byte,
)


class TestAdcSample:
    def test_zero(self):
        assert adc_sample(0.0) == 0

    def test_paper_formula_inverse(self):
        # round(32 * 1024 / 500) = round(65.536)
        assert adc_sample(32.0) == 66

    def test_clamps_high(self):
        assert adc_sample(600.0) == 1023

    def test_noise_stays_in_range(self):
        rng = random.Random(3)
        for _ in range(200):
            assert 0 <= adc_sample(0.1, rng, noise=True) <= 1023


class TestCountsToCelsius:
    def test_examples(self):
        assert counts_to_celsius(0) == 0.0
        assert counts_to_celsius(66) == 32.2265625
        assert counts_to_celsius(1023) == 499.51171875

    def test_matches_calibration_expression_everywhere(self):
        for counts in range(1024):
            assert counts_to_celsius(counts) == 5 * (counts * 100) / 1024

    def test_monotone(self):
        values = [counts_to_celsius(c) for c in range(1024)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_round_trip_identity_noise_free(self):
        for counts in range(1024):
            assert adc_sample(counts_to_celsius(counts)) == counts

    @pytest.mark.parametrize("counts", [-1, 1024])
    def test_range_enforced(self, counts):
        with pytest.raises(ValueError):
            counts_to_celsius(counts)

    def test_quantization_error_bounds(self):
        rng = random.Random(11)
        lsb = 500.0 / 1024.0
        for _ in range(500):
            temp = rng.uniform(0.0, 499.5)
            clean = counts_to_celsius(adc_sample(temp))
            assert abs(clean - temp) <= 0.5 * lsb + 1e-12
            noisy = counts_to_celsius(adc_sample(temp, rng, noise=True))
            assert abs(noisy - temp) <= 1.5 * lsb + 1e-12


class TestTemperatureByte:
    def test_truncates_toward_zero(self):
        assert temperature_byte(32.2265625) == 32
        assert temperature_byte(0.0) == 0

    def test_clamps_to_byte(self):
        assert temperature_byte(499.51171875) == 255


def two_lab_network():
    nodes = [
        NodeSpec("coordinator", "coordinator", (0, 0), 20.0),
        NodeSpec("lab1", "end_device", (3.0, 0.0), 20.0),
        NodeSpec("lab2", "end_device", (0.0, 3.0), 20.0),
    ]
    topo = build_topology(nodes)
    return Network(topo, calibrate_delay_params(MEASURED_DELAY_ROWS), seed=5)


class TestTemperatureNode:
    def test_first_reading_is_quantized_baseline(self):
        net = two_lab_network()
        got = []
        net.set_handler("coordinator", lambda f, t: got.append(f))
        TemperatureNode(net, "lab1", 1, AmbientModel(32.2)).start()
        TemperatureNode(net, "lab2", 2, AmbientModel(28.2)).start()
        net.run_until(400)
        by_id = {f.node_id: f.payload[0] for f in got}
        assert by_id == {1: 32, 2: 28}

    def test_tick_cadence_exact(self):
        net = two_lab_network()
        node = TemperatureNode(net, "lab1", 1, AmbientModel(30.0))
        node.start()
        net.run_until(5000)
        sends = [d.t_send for d in net.deliveries if d.src == "lab1"]
        assert sends == [i * 500.0 for i in range(len(sends))]
        assert len(sends) == 10  # ticks at 0..4500 delivered; t=5000 still in flight

    def test_walk_stays_in_bounds(self):
        model = AmbientModel(30.0, walk_step_c=5.0, min_c=28.0, max_c=31.0)
        walk = AmbientWalk(model, random.Random(1))
        for _ in range(300):
            value = walk.step()
            assert 28.0 <= value <= 31.0

    def test_zero_ambient_sends_zero_byte(self):
        net = two_lab_network()
        got = []
        net.set_handler("coordinator", lambda f, t: got.append(f))
        TemperatureNode(net, "lab1", 1, AmbientModel(0.0, walk_step_c=0.0)).start()
        net.run_until(400)
        assert got[0] == Frame(1, bytes([0]))

    def test_hot_ambient_clamps_to_255(self):
        net = two_lab_network()
        got = []
        net.set_handler("coordinator", lambda f, t: got.append(f))
        model = AmbientModel(499.5, walk_step_c=0.0, max_c=500.0)
        TemperatureNode(net, "lab1", 1, model).start()
        net.run_until(400)
        assert got[0].payload[0] == 255

    def test_same_seed_same_series(self):
        def series():
            net = two_lab_network()
            got = []
            net.set_handler("coordinator", lambda f, t: got.append(f.payload[0]))
            TemperatureNode(net, "lab1", 1, AmbientModel(32.2, walk_step_c=1.0)).start()
            net.run_until(10_000)
            return got

        assert series() == series()
