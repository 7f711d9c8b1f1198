"""Planar reduced-order biped: point-mass CoM, pitch flywheel, stepping machine.

The subject model is deliberately small. Horizontal CoM motion follows
linear-inverted-pendulum dynamics about the stance foot with ankle and
flywheel torque inputs; torso pitch is a single flywheel-regulated rotary
degree of freedom; height is held by a stiff leg servo while the robot has
support. A phase machine produces walking-in-place: a dual-support window
at the start of each cycle, then a swing whose foot rises and falls on a
sine profile, then a touchdown that replants the swing foot at the
commanded location. Touchdown timing and foot placement carry small seeded
noise, which is the only source of randomness in the subject.

Support is lost (latched) when the CoM travels beyond leg reach of the
stance foot or pitch passes the structural limit; the body then falls
ballistically until it reaches the ground and freezes. Fallover detection
is a pure function over a trajectory window with explicit thresholds.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Optional, Sequence

if TYPE_CHECKING:  # only for annotations; controllers imports this module
    from .controllers import ControlCommand


class NonFiniteState(ArithmeticError):
    """A state component became NaN/Inf; integration parameters are bad."""


class OffsetOutOfRange(ValueError):
    """Requested placement offset outside the admissible band."""


class WindowTooShort(ValueError):
    """Fallover decision needs the full post-impact observation window."""


class Stance(enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"
    DUAL = "Dual"


class SwingDir(enum.Enum):
    UP = "Up"
    DOWN = "Down"
    NONE = "None"


@dataclass(frozen=True)
class GaitPhase:
    stance: Stance
    swing_dir: SwingDir

    def __post_init__(self) -> None:
        if (self.stance is Stance.DUAL) != (self.swing_dir is SwingDir.NONE):
            raise ValueError("Dual support iff swing direction is None")

    def label(self) -> str:
        return f"{self.stance.value}_{self.swing_dir.value}"

    @staticmethod
    def from_label(label: str) -> "GaitPhase":
        stance_s, swing_s = label.split("_")
        return GaitPhase(Stance(stance_s), SwingDir(swing_s))


DUAL_NONE = GaitPhase(Stance.DUAL, SwingDir.NONE)


@dataclass(frozen=True)
class RobotSpec:
    """Plant parameters plus the gait configuration of the active policy.

    Gait timing fields are part of the spec because stepping cadence,
    clearance, reactive triggering and initiation latency belong to the
    locomotion behaviour under test; the campaign engine stamps the
    controller's gait values into the spec used for that test.
    """

    total_mass: float = 45.0            # kg
    com_height_nominal: float = 0.9     # m
    flywheel_inertia: float = 4.0       # kg m^2
    max_step_length: float = 0.5        # m
    step_period: float = 0.4            # s
    swing_apex: float = 0.08            # m
    ankle_torque_limit: float = 10.0    # N m  (CoP authority ~ tau/(m g))
    flywheel_torque_limit: float = 60.0  # N m
    gravity: float = 9.81               # m/s^2

    # gait behaviour
    dual_support_fraction: float = 0.2  # of step_period spent in dual support
    min_step_interval: float = 0.12     # s, smallest time between touchdowns
    reactive_step_threshold: Optional[float] = None
    # fraction of max_step_length; if the required capture step exceeds it
    # the swing is cut short (None disables reactive stepping)
    stand_when_idle: bool = False       # stop stepping at zero velocity command
    initiation_hold: float = 0.0        # s, standing-to-walking latency
    touchdown_jitter: float = 0.005     # s, +/- uniform touchdown timing noise
    placement_jitter: float = 0.005     # m, +/- uniform foot placement noise

    # failure geometry
    support_reach: float = 0.55         # m, CoM-to-foot horizontal reach limit
    pitch_support_limit: float = 1.0    # rad, structural support loss

    def __post_init__(self) -> None:
        for name in ("total_mass", "com_height_nominal", "flywheel_inertia",
                     "max_step_length", "step_period", "swing_apex",
                     "ankle_torque_limit", "flywheel_torque_limit", "gravity"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"RobotSpec.{name} must be positive")
        if not 0.0 < self.dual_support_fraction < 1.0:
            raise ValueError("dual_support_fraction must be in (0, 1)")

    def omega0(self) -> float:
        """Inverted-pendulum constant sqrt(g / z0)."""
        return math.sqrt(self.gravity / self.com_height_nominal)


# Vertical leg servo holding the CoM at nominal height while supported.
_HEIGHT_KP = 900.0   # 1/s^2
_HEIGHT_KD = 60.0    # 1/s
_FALLEN_HEIGHT_FRACTION = 0.3


@dataclass(slots=True)
class RobotState:
    """Full subject state. Treated as immutable; stepping returns a copy."""

    com_x: float
    com_z: float
    com_vx: float
    com_vz: float
    pitch: float
    pitch_rate: float
    stance_foot_x: float
    swing_foot_x: float
    swing_foot_z: float
    gait: GaitPhase
    phase_clock: float
    # bookkeeping beyond the minimal contract
    stance_side: Stance = Stance.LEFT  # persists through dual support
    standing: bool = False
    supported: bool = True
    fallen: bool = False
    cycle_duration: float = 0.4       # s, this cycle's jittered period
    time_since_touchdown: float = 0.0
    walk_request_elapsed: float = 0.0
    step_count: int = 0


def _gait_at(clock: float, cycle_duration: float, spec: RobotSpec,
             stance_side: Stance) -> tuple[GaitPhase, float]:
    """Phase label and swing foot height at a clock position in the cycle."""
    dual_t = spec.dual_support_fraction * spec.step_period
    if clock < dual_t:
        return DUAL_NONE, 0.0
    swing_span = max(cycle_duration - dual_t, 1e-9)
    s = min((clock - dual_t) / swing_span, 1.0)
    z = spec.swing_apex * math.sin(math.pi * s)
    direction = SwingDir.UP if s < 0.5 else SwingDir.DOWN
    return GaitPhase(stance_side, direction), z


def init_state(placement_offset: float, gait_phase_fraction: float,
               spec: RobotSpec, rng) -> RobotState:
    """Walking-in-place state at a given cycle fraction and placement error.

    The rng chooses the initial stance side and the first cycle's timing
    jitter (two draws, in that order).
    """
    if abs(placement_offset) > 0.05 + 1e-12:
        raise OffsetOutOfRange(
            f"placement offset {placement_offset:+.4f} m exceeds +/-0.05 m")
    if not 0.0 <= gait_phase_fraction < 1.0:
        raise ValueError("gait phase fraction must lie in [0, 1)")

    side = Stance.LEFT if rng.integers(0, 2) == 0 else Stance.RIGHT
    jitter = float(rng.uniform(-spec.touchdown_jitter, spec.touchdown_jitter))
    cycle = spec.step_period + jitter

    com_x = placement_offset
    standing = spec.stand_when_idle
    clock = 0.0 if standing else gait_phase_fraction * spec.step_period
    if standing:
        gait, swing_z = DUAL_NONE, 0.0
    else:
        gait, swing_z = _gait_at(clock, cycle, spec, side)

    return RobotState(
        com_x=com_x, com_z=spec.com_height_nominal,
        com_vx=0.0, com_vz=0.0, pitch=0.0, pitch_rate=0.0,
        stance_foot_x=com_x, swing_foot_x=com_x, swing_foot_z=swing_z,
        gait=gait, phase_clock=clock, stance_side=side, standing=standing,
        cycle_duration=cycle)


def phase_label(state: RobotState) -> GaitPhase:
    """Stance/swing phase of a state, as carried by the phase machine."""
    return state.gait


def robot_step(state: RobotState, u_i: "ControlCommand", external_force: float,
               force_height: float, spec: RobotSpec, dt: float, rng) -> RobotState:
    """Advance the subject one step of size dt under command and push.

    Order inside the step: torque clamping, CoM/pitch semi-implicit Euler
    update, support check, then phase-machine bookkeeping (touchdown events
    fire after the dynamics update). ``external_force`` acts along +x at
    ``force_height`` above ground.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if state.fallen:
        return state

    m = spec.total_mass
    z0 = spec.com_height_nominal
    w2 = spec.gravity / z0

    tau_a = u_i.ankle_torque
    lim = spec.ankle_torque_limit
    if tau_a > lim:
        tau_a = lim
    elif tau_a < -lim:
        tau_a = -lim
    tau_f = u_i.flywheel_torque
    lim = spec.flywheel_torque_limit
    if tau_f > lim:
        tau_f = lim
    elif tau_f < -lim:
        tau_f = -lim

    pitch_moment = external_force * (force_height - state.com_z)

    if state.supported:
        ax = (w2 * (state.com_x - state.stance_foot_x)
              + (tau_a - tau_f) / (m * z0)
              + external_force / m)
        az = (_HEIGHT_KP * (z0 - state.com_z) - _HEIGHT_KD * state.com_vz)
        alpha = (tau_f + pitch_moment) / spec.flywheel_inertia
    else:
        ax = external_force / m
        az = -spec.gravity
        alpha = pitch_moment / spec.flywheel_inertia

    com_vx = state.com_vx + ax * dt
    com_vz = state.com_vz + az * dt
    pitch_rate = state.pitch_rate + alpha * dt
    com_x = state.com_x + com_vx * dt
    com_z = state.com_z + com_vz * dt
    pitch = state.pitch + pitch_rate * dt

    if not (math.isfinite(com_x) and math.isfinite(com_vx)
            and math.isfinite(com_z) and math.isfinite(com_vz)
            and math.isfinite(pitch) and math.isfinite(pitch_rate)):
        raise NonFiniteState("robot state diverged; check stiffness and dt")

    supported = state.supported
    if supported and (abs(com_x - state.stance_foot_x) > spec.support_reach
                      or abs(pitch) > spec.pitch_support_limit):
        supported = False

    fallen = False
    if not supported and com_z <= _FALLEN_HEIGHT_FRACTION * z0:
        com_z = _FALLEN_HEIGHT_FRACTION * z0
        com_vx = com_vz = pitch_rate = 0.0
        fallen = True

    stance_foot_x = state.stance_foot_x
    swing_foot_x = state.swing_foot_x
    swing_foot_z = state.swing_foot_z
    gait = state.gait
    standing = state.standing
    clock = state.phase_clock
    cycle = state.cycle_duration
    t_since_td = state.time_since_touchdown + dt
    walk_elapsed = state.walk_request_elapsed
    step_count = state.step_count
    side = state.stance_side

    if supported and not fallen:
        wants_walk = (not spec.stand_when_idle
                      or abs(u_i.desired_velocity) > 1e-9)
        if standing:
            if wants_walk:
                walk_elapsed += dt
                if walk_elapsed >= spec.initiation_hold:
                    standing = False
                    clock = 0.0
                    walk_elapsed = 0.0
            else:
                walk_elapsed = 0.0
        if not standing:
            clock += dt
            touchdown = clock >= cycle
            if (not touchdown and spec.reactive_step_threshold is not None
                    and t_since_td >= spec.min_step_interval):
                required = abs(com_vx) / spec.omega0()
                if required > spec.reactive_step_threshold * spec.max_step_length:
                    touchdown = True
            if touchdown and t_since_td >= spec.min_step_interval:
                target = u_i.next_footstep_x
                lim = spec.max_step_length
                if target > lim:
                    target = lim
                elif target < -lim:
                    target = -lim
                noise = float(rng.uniform(-spec.placement_jitter,
                                          spec.placement_jitter))
                new_stance = com_x + target + noise
                swing_foot_x = stance_foot_x
                stance_foot_x = new_stance
                swing_foot_z = 0.0
                side = Stance.RIGHT if side is Stance.LEFT else Stance.LEFT
                clock = 0.0
                cycle = spec.step_period + float(
                    rng.uniform(-spec.touchdown_jitter, spec.touchdown_jitter))
                t_since_td = 0.0
                step_count += 1
                if (spec.stand_when_idle and not wants_walk
                        and abs(com_vx) < 0.1):
                    standing = True
            elif touchdown:
                # Cycle expired inside the minimum step interval; hold the
                # swing at its end until a step is admissible.
                clock = cycle
            gait, swing_foot_z_profile = _gait_at(clock, cycle, spec, side)
            if not standing:
                swing_foot_z = swing_foot_z_profile
            else:
                gait, swing_foot_z = DUAL_NONE, 0.0
        else:
            gait, swing_foot_z = DUAL_NONE, 0.0
    elif not fallen:
        # Airborne: feet travel with the body, no stepping.
        gait = state.gait

    return RobotState(
        com_x=com_x, com_z=com_z, com_vx=com_vx, com_vz=com_vz,
        pitch=pitch, pitch_rate=pitch_rate,
        stance_foot_x=stance_foot_x, swing_foot_x=swing_foot_x,
        swing_foot_z=swing_foot_z, gait=gait, phase_clock=clock,
        stance_side=side, standing=standing, supported=supported,
        fallen=fallen, cycle_duration=cycle,
        time_since_touchdown=t_since_td,
        walk_request_elapsed=walk_elapsed, step_count=step_count)


def detect_fallover(window: Sequence[RobotState], spec: RobotSpec, dt: float,
                    window_length: float = 4.0,
                    pitch_limit: float = 0.6) -> bool:
    """Decide fallover over a post-impact trajectory window.

    True when any of the explicit failure signatures appears: pitch beyond
    ``pitch_limit``, CoM height below half nominal, or a required capture
    step |vx| / omega0 exceeding the maximum step length for at least three
    consecutive samples. Raises WindowTooShort when the window covers less
    than ``window_length`` seconds.
    """
    if (len(window) - 1) * dt < window_length - 1e-9:
        raise WindowTooShort(
            f"window covers {(len(window) - 1) * dt:.3f} s < "
            f"{window_length} s")
    half_height = 0.5 * spec.com_height_nominal
    step_limit = spec.max_step_length * spec.omega0()
    deficit_run = 0
    for st in window:
        if abs(st.pitch) > pitch_limit:
            return True
        if st.com_z < half_height:
            return True
        if abs(st.com_vx) > step_limit:
            deficit_run += 1
            if deficit_run >= 3:
                return True
        else:
            deficit_run = 0
    return False


def required_capture_step(state: RobotState, spec: RobotSpec) -> float:
    """Step length that would park the capture point under the new foot."""
    return abs(state.com_vx) / spec.omega0()


def capturability_boundary(spec: RobotSpec) -> float:
    """Largest single-step-capturable impulse for the pendulum model.

    An impulse J gives the CoM velocity J / m; one step can capture it while
    the capture point stays within reach, i.e. J <= m * omega0 * max step.
    """
    return spec.total_mass * spec.omega0() * spec.max_step_length
