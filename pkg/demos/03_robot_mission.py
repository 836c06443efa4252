"""Drive the robot to (2, 1) and watch dead reckoning track the plant.

The controller runs the three-leg flow -- drive +x, turn 90 degrees in
place, drive +y -- on the dead-reckoned estimate only.  The plant
integrates the unicycle model exactly, so the printout shows how far the
Euler-integrated encoder estimate strays from the truth.
"""

import math

from meshbed.robot import (
    EncoderCounts,
    Pose,
    RobotGeometry,
    controller_step,
    odometry_update,
    plant_step,
    position_payload,
    start_mission,
    wheel_velocities,
)

geometry = RobotGeometry()
mission = start_mission((2, 1))
plant = Pose()
estimate = Pose()
counts = EncoderCounts()
dt = 0.01

print(f"geometry: r={geometry.wheel_radius_m} m, b={geometry.wheelbase_m} m, "
      f"{geometry.encoder_ppr} pulses/rev")
print(f"{'t[s]':>6} {'phase':<8} {'report':<8} {'estimate (x, y, deg)':<28} {'plant-est gap [mm]':>18}")

t = 0.0
last_phase = None
next_print = 0.0
while mission.phase != "done" and t < 60.0:
    (v, omega), mission = controller_step(mission, estimate)
    speeds = wheel_velocities(v, omega, geometry)
    plant = plant_step(plant, speeds, dt, geometry)
    delta = counts.update(speeds, dt, geometry)
    estimate = odometry_update(estimate, delta, dt, geometry)
    t += dt
    if t >= next_print or mission.phase != last_phase:
        gap = math.dist((plant.x, plant.y), (estimate.x, estimate.y)) * 1000
        report = tuple(position_payload(estimate))
        print(f"{t:6.2f} {mission.phase:<8} {str(report):<8} "
              f"({estimate.x:6.3f}, {estimate.y:6.3f}, {math.degrees(estimate.theta):7.2f})"
              f" {gap:18.3f}")
        next_print += 2.0
        last_phase = mission.phase

print()
print(f"mission done at t={t:.2f} s")
print(f"estimate ({estimate.x:.4f}, {estimate.y:.4f}, {math.degrees(estimate.theta):.3f} deg)")
print(f"plant    ({plant.x:.4f}, {plant.y:.4f}, {math.degrees(plant.theta):.3f} deg)")
print(f"encoder counts: left={counts.left} right={counts.right}")
