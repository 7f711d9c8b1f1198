"""Fixed-step deterministic integrator for the composed ram + biped world.

One tick advances the whole bench by ``dt``: the active controller computes
its command from the robot observation, the foam contact force follows from
the current geometry, both bodies integrate semi-implicit Euler, and the
contact bookkeeping updates. While the ram face overlaps the torso foam the
tick is subdivided to keep the stiff contact stable at the default step.

The foam stack between the ram face and the torso is a single lumped
spring-damper element: force = k * penetration + c * closing_rate, clamped
at zero so the foam never pulls. Equal and opposite force samples feed the
robot and the ram, so the transferred impulse balances by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .biped import NonFiniteState, RobotSpec, RobotState, robot_step
from .impactor import ImpactorPhase, ImpactorSpec, ImpactorState, ram_step

# Penetration beyond the foam thickness engages a much stiffer bottom-out
# layer (face pressing through to structure).
_BOTTOM_OUT_FACTOR = 20.0


@dataclass(frozen=True)
class SimConfig:
    """Integration and contact-model parameters for one run."""

    dt: float = 1e-3                 # s, world tick
    horizon: float = 10.0            # s, hard cap per test
    foam_stiffness: float = 5.0e4    # N/m
    foam_damping: float = 520.0      # N s/m
    foam_thickness: float = 0.054    # m
    gravity: float = 9.81            # m/s^2
    impact_axis_height: float = 0.992  # m, ram face center above ground
    contact_substeps: int = 10       # inner steps per tick while in contact
    torso_half_depth: float = 0.10   # m, CoM to torso contact surface

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.horizon < 4.0:
            raise ValueError(
                "horizon must cover at least the 4 s observation window")
        if self.contact_substeps < 1:
            raise ValueError("contact_substeps must be >= 1")


@dataclass(slots=True)
class ContactState:
    """Bookkeeping of the (first) foam contact episode.

    ``in_contact`` tracks geometric overlap; the damped foam can drop to
    zero force slightly before the faces separate, so positive force
    implies penetration but not the reverse. The accumulated impulse grows
    only during the first episode and freezes at its separation.
    """

    in_contact: bool = False
    penetration: float = 0.0         # m, >= 0
    contact_force: float = 0.0       # N, >= 0, along the impact axis
    impulse_accumulated: float = 0.0  # kg m/s delivered to the subject
    first_contact_time: Optional[float] = None
    separation_time: Optional[float] = None


@dataclass(slots=True)
class WorldState:
    """Composed bench state: subject, equipment, contact, time, randomness."""

    tick: int
    time: float
    robot: RobotState
    impactor: ImpactorState
    contact: ContactState
    rng: np.random.Generator
    robot_spec: RobotSpec
    impactor_spec: ImpactorSpec


def make_world(robot: RobotState, impactor: ImpactorState, seed: int,
               robot_spec: RobotSpec, impactor_spec: ImpactorSpec) -> WorldState:
    return WorldState(
        tick=0, time=0.0, robot=robot, impactor=impactor,
        contact=ContactState(), rng=np.random.default_rng(seed),
        robot_spec=robot_spec, impactor_spec=impactor_spec)


def contact_force(impactor: ImpactorState, robot: RobotState,
                  config: SimConfig) -> float:
    """Foam force between the ram face and the torso surface, >= 0.

    Zero whenever the face-to-torso gap is open; otherwise the lumped
    spring-damper law on penetration and closing rate, with a stiff
    bottom-out layer past the foam thickness. A fallen subject is below the
    impact axis and cannot be (re)contacted.
    """
    if robot.fallen:
        return 0.0
    penetration = impactor.ram_position - (robot.com_x - config.torso_half_depth)
    if penetration <= 0.0:
        return 0.0
    rate = impactor.ram_velocity - robot.com_vx
    force = config.foam_stiffness * penetration + config.foam_damping * rate
    if penetration > config.foam_thickness:
        force += (_BOTTOM_OUT_FACTOR * config.foam_stiffness
                  * (penetration - config.foam_thickness))
    return force if force > 0.0 else 0.0


def advance(world: WorldState, config: SimConfig, controller) -> WorldState:
    """Advance the composed world one tick.

    Sub-step order is fixed: (1) the controller computes the internal
    command from the robot observation, (2) the contact force follows from
    the current geometry, (3) robot and ram integrate semi-implicit Euler,
    (4) contact bookkeeping updates. The command is held across contact
    substeps (control runs at the tick rate, the plant at the substep rate).
    """
    robot = world.robot
    imp = world.impactor
    con = world.contact
    rspec = world.robot_spec
    ispec = world.impactor_spec
    dt = config.dt

    cmd = controller.command(robot, rspec)

    surface = robot.com_x - config.torso_half_depth
    gap = surface - imp.ram_position
    closing = imp.ram_velocity - robot.com_vx
    near = con.in_contact or gap <= 0.0 or (
        closing > 0.0 and gap < 1.5 * closing * dt)
    n = config.contact_substeps if near else 1
    h = dt / n

    impulse = con.impulse_accumulated
    first_t = con.first_contact_time
    sep_t = con.separation_time
    was_overlapping = con.in_contact
    base_time = world.time
    h_imp = config.impact_axis_height
    rng = world.rng

    for i in range(n):
        force = contact_force(imp, robot, config)
        overlapping = (not robot.fallen and
                       imp.ram_position > robot.com_x - config.torso_half_depth)
        if force > 0.0 and first_t is None:
            first_t = base_time + i * h
        if force > 0.0 and sep_t is None and first_t is not None:
            impulse += force * h
        robot = robot_step(robot, cmd, force, h_imp, rspec, h, rng)
        imp = ram_step(imp, ispec, None, force, h)
        now_overlapping = (not robot.fallen and
                           imp.ram_position > robot.com_x - config.torso_half_depth)
        if (was_overlapping or overlapping) and not now_overlapping \
                and first_t is not None and sep_t is None:
            sep_t = base_time + (i + 1) * h
        was_overlapping = now_overlapping

    if not (math.isfinite(imp.ram_position) and math.isfinite(imp.ram_velocity)):
        raise NonFiniteState("impactor state diverged; check stiffness and dt")

    end_force = contact_force(imp, robot, config)
    end_pen = imp.ram_position - (robot.com_x - config.torso_half_depth)
    if robot.fallen or end_pen < 0.0:
        end_pen = 0.0

    tick = world.tick + 1
    return WorldState(
        tick=tick, time=tick * dt, robot=robot, impactor=imp,
        contact=ContactState(
            in_contact=end_pen > 0.0, penetration=end_pen,
            contact_force=end_force, impulse_accumulated=impulse,
            first_contact_time=first_t, separation_time=sep_t),
        rng=rng, robot_spec=rspec, impactor_spec=ispec)


TRAJECTORY_COLUMNS = (
    "tick", "time_s", "ram_pos_m", "ram_vel_mps", "contact_force_N",
    "com_x_m", "com_z_m", "com_vx_mps", "com_vz_mps", "pitch_rad",
    "pitch_rate_radps", "stance_label", "swing_label")


@dataclass
class TrajectoryLog:
    """Per-tick log captured before each advance (state at tick start)."""

    rows: List[tuple] = field(default_factory=list)
    states: List[RobotState] = field(default_factory=list)

    def capture(self, world: WorldState, config: SimConfig) -> None:
        r = world.robot
        imp = world.impactor
        force = contact_force(imp, r, config)
        self.rows.append((
            world.tick, world.time, imp.ram_position, imp.ram_velocity,
            force, r.com_x, r.com_z, r.com_vx, r.com_vz, r.pitch,
            r.pitch_rate, r.gait.stance.value, r.gait.swing_dir.value))
        self.states.append(r)

    def ram_series(self) -> List[Tuple[float, float, float]]:
        """(time, ram velocity, contact force) triples for impact detection."""
        return [(row[1], row[3], row[4]) for row in self.rows]

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(TRAJECTORY_COLUMNS) + "\n")
            for row in self.rows:
                fh.write(",".join(
                    str(v) if isinstance(v, (int, str)) else repr(v)
                    for v in row) + "\n")


def world_to_dict(world: WorldState) -> dict:
    """Serializable snapshot; restoring it resumes the exact trajectory."""
    r = world.robot
    imp = world.impactor
    con = world.contact
    return {
        "tick": world.tick,
        "time": world.time,
        "robot": {
            "com_x": r.com_x, "com_z": r.com_z, "com_vx": r.com_vx,
            "com_vz": r.com_vz, "pitch": r.pitch, "pitch_rate": r.pitch_rate,
            "stance_foot_x": r.stance_foot_x, "swing_foot_x": r.swing_foot_x,
            "swing_foot_z": r.swing_foot_z, "gait": r.gait.label(),
            "phase_clock": r.phase_clock, "stance_side": r.stance_side.value,
            "standing": r.standing,
            "supported": r.supported, "fallen": r.fallen,
            "cycle_duration": r.cycle_duration,
            "time_since_touchdown": r.time_since_touchdown,
            "walk_request_elapsed": r.walk_request_elapsed,
            "step_count": r.step_count,
        },
        "impactor": {
            "ram_position": imp.ram_position,
            "ram_velocity": imp.ram_velocity,
            "phase": imp.phase.value,
            "peak_velocity_achieved": imp.peak_velocity_achieved,
            "target_peak": imp.target_peak,
            "start_position": imp.start_position,
        },
        "contact": {
            "in_contact": con.in_contact, "penetration": con.penetration,
            "contact_force": con.contact_force,
            "impulse_accumulated": con.impulse_accumulated,
            "first_contact_time": con.first_contact_time,
            "separation_time": con.separation_time,
        },
        "rng_state": world.rng.bit_generator.state,
        "robot_spec": {k: getattr(world.robot_spec, k)
                       for k in world.robot_spec.__dataclass_fields__},
        "impactor_spec": {k: getattr(world.impactor_spec, k)
                          for k in world.impactor_spec.__dataclass_fields__},
    }


def world_from_dict(data: dict) -> WorldState:
    from .biped import GaitPhase, Stance

    rd = dict(data["robot"])
    rd["gait"] = GaitPhase.from_label(rd["gait"])
    rd["stance_side"] = Stance(rd["stance_side"])
    robot = RobotState(**rd)
    idd = dict(data["impactor"])
    idd["phase"] = ImpactorPhase(idd["phase"])
    impactor = ImpactorState(**idd)
    contact = ContactState(**data["contact"])
    rng = np.random.default_rng(0)
    rng.bit_generator.state = data["rng_state"]
    return WorldState(
        tick=data["tick"], time=data["time"], robot=robot,
        impactor=impactor, contact=contact, rng=rng,
        robot_spec=RobotSpec(**data["robot_spec"]),
        impactor_spec=ImpactorSpec(**data["impactor_spec"]))
