"""meshbed: a deterministic software testbed for a small ZigBee-style mesh.

Two temperature nodes and a waypoint-driven differential-drive robot report
over a custom byte-frame protocol through routers to a coordinator gateway
that keeps live state, logs spreadsheet-style CSV rows, and accepts robot
commands, all inside one seeded discrete-event simulation.
"""

from .frames import (
    Frame,
    FrameError,
    PayloadRegistry,
    StreamParser,
    compute_checksum,
    encode_frame,
    hex_dump,
)
from .gateway import CsvLog, DispatchError, Gateway, SensorReading
from .robot import (
    ControllerParams,
    EncoderCounts,
    MissionState,
    Pose,
    RobotGeometry,
    RobotNode,
    controller_step,
    odometry_update,
    plant_step,
    report_position,
)
from .scenario import (
    ScenarioConfig,
    ScenarioError,
    Testbed,
    parse_scenario,
    render_delay_table,
    reproduce_table,
)
from .simnet import (
    DelayParams,
    Network,
    NodeSpec,
    RoutingTable,
    SleepSchedule,
    Topology,
    TopologyError,
    build_topology,
    calibrate_delay_params,
    compute_routes,
    path_delay,
    reference_topology,
)
from .tempnode import AmbientModel, TemperatureNode, adc_sample, counts_to_celsius

__version__ = "0.1.0"
