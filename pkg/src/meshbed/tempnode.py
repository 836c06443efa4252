"""Simulated temperature sensor node.

Each tick the node wakes, samples its ambient through a 10-bit ADC over a
5 V reference, converts counts back to degrees with the sensor calibration
``5 * (counts * 100) / 1024`` (10 mV/degC), frames the truncated integer
value and transmits it to the coordinator, then sleeps until the next tick.
"""

import random
from dataclasses import dataclass

from .frames import Frame
from .simnet import Network

ADC_MAX = 1023
CELSIUS_PER_COUNT = 500.0 / 1024.0  # 5 V reference, 10-bit, 10 mV/degC
DEFAULT_SAMPLE_PERIOD_MS = 500.0


@dataclass(frozen=True)
class AmbientModel:
    """Bounded random walk that drives a node's true temperature."""

    baseline_c: float
    walk_step_c: float = 0.5
    min_c: float = 0.0
    max_c: float = 50.0

    def __post_init__(self):
        if not self.min_c <= self.baseline_c <= self.max_c:
            raise ValueError("baseline must lie within [min_c, max_c]")
        if self.walk_step_c < 0:
            raise ValueError("walk_step_c must be >= 0")


class AmbientWalk:
    def __init__(self, model: AmbientModel, rng: random.Random):
        self.model = model
        self.rng = rng
        self.current = model.baseline_c

    def step(self) -> float:
        m = self.model
        delta = self.rng.uniform(-m.walk_step_c, m.walk_step_c)
        self.current = min(m.max_c, max(m.min_c, self.current + delta))
        return self.current


def adc_sample(true_temp_c: float, rng: random.Random | None = None, noise: bool = False) -> int:
    """Quantize a temperature to 10-bit counts; optional +-1 count noise."""
    counts = round(true_temp_c * 1024.0 / 500.0)
    if noise:
        counts += rng.choice((-1, 0, 1))
    return min(ADC_MAX, max(0, counts))


def counts_to_celsius(counts: int) -> float:
    """Sensor calibration: 5 * (counts * 100) / 1024, in real arithmetic."""
    if not 0 <= counts <= ADC_MAX:
        raise ValueError(f"counts {counts} outside 0..{ADC_MAX}")
    return 5.0 * (counts * 100.0) / 1024.0


def temperature_byte(temp_c: float) -> int:
    """Wire payload: truncate toward zero, clamp to one byte."""
    return min(255, max(0, int(temp_c)))


class TemperatureNode:
    """Wake -> sample -> convert -> frame -> transmit -> sleep loop."""

    def __init__(
        self,
        network: Network,
        name: str,
        wire_id: int,
        ambient: AmbientModel,
        sample_period_ms: float = DEFAULT_SAMPLE_PERIOD_MS,
        adc_noise: bool = False,
    ):
        self.network = network
        self.name = name
        self.wire_id = wire_id
        self.sample_period_ms = sample_period_ms
        self.adc_noise = adc_noise
        self.walk = AmbientWalk(ambient, network.node_rng(name, "ambient"))
        self._adc_rng = network.node_rng(name, "adc")
        self._first = True
        self.sent = 0

    def start(self, at_ms: float = 0.0) -> None:
        self.network.schedule(at_ms, "temp_tick", self.tick, src=self.name)

    def tick(self) -> None:
        if self._first:
            temp = self.walk.current  # first reading reports the baseline
            self._first = False
        else:
            temp = self.walk.step()
        counts = adc_sample(temp, self._adc_rng, self.adc_noise)
        byte = temperature_byte(counts_to_celsius(counts))
        frame = Frame(self.wire_id, bytes([byte]))
        self.network.send_frame(self.name, self.network.topology.coordinator_id, frame)
        self.sent += 1
        self.network.schedule(
            self.network.now + self.sample_period_ms, "temp_tick", self.tick, src=self.name
        )
