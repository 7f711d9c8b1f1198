"""Three locomotion policies behind one command interface.

All three drive the same reduced biped but respond to pushes differently:

* ``tm_analog`` - capture-point stepping with velocity regulation on top
  (Raibert-style), a weak station-keeping term, and a reactive step trigger
  that cuts the swing short when the capture point runs away.
* ``tl_analog`` - the same low-level torque solve, with the step and pitch
  setpoints shifted by a gain-scheduled lookup table over (vx, pitch) bins.
  The table is a versioned data file; it stands in for a learned high-level
  policy and is deliberately conservative at large velocity excursions.
* ``bb_analog`` - a black-box style velocity tracker: Raibert stepping only
  (no capture-point term), ankle-dominant balance, and no stepping at all
  when the commanded velocity is zero. An operator-nudge helper supplies
  the small velocity commands that keep it near the fixed point.

Torques come from a two-task (CoM regulation, pitch regulation) weighted
least-squares problem; with two tasks and two inputs the stationarity
conditions reduce to an exact solve, so the weights cancel and clamping to
the actuation limits happens afterwards.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Optional, Sequence

from .biped import RobotSpec, RobotState


class MissingPolicyTable(FileNotFoundError):
    """tl_analog was asked to run without its policy table."""


@dataclass(slots=True)
class ControlCommand:
    """Internal action of the subject for one control tick."""

    ankle_torque: float       # N m
    flywheel_torque: float    # N m
    next_footstep_x: float    # m, relative to the CoM
    desired_velocity: float   # m/s


class ControllerKind(enum.Enum):
    TM_ANALOG = "tm_analog"
    TL_ANALOG = "tl_analog"
    BB_ANALOG = "bb_analog"


@dataclass(frozen=True)
class BalanceGains:
    """Low-level task gains shared by the capture-point controllers."""

    k_v: float = 0.1            # velocity regulation on foot placement
    station_gain: float = 0.3   # position pull of the footstep target
    station_step_limit: float = 0.05  # m, cap on the station pull per step
    kp_com: float = 4.0         # 1/s^2, CoM task
    kd_com: float = 6.0         # 1/s
    kp_pitch: float = 80.0      # 1/s^2, pitch task
    kd_pitch: float = 18.0      # 1/s


@dataclass(frozen=True)
class BbGains:
    """Velocity-tracking gains of the black-box analog."""

    raibert_gain: float = 0.12  # s, placement per velocity error
    kp_bal: float = 6.0         # 1/s^2, ankle balance about the stance foot
    kd_track: float = 8.0       # 1/s, velocity tracking
    kp_pitch: float = 60.0
    kd_pitch: float = 15.0


TM_GAINS = BalanceGains()
TL_GAINS = BalanceGains()
BB_GAINS = BbGains()


def solve_task_torques(obs: RobotState, spec: RobotSpec,
                       a_com_des: float, alpha_des: float) -> tuple[float, float]:
    """Exact solution of the two-task least-squares torque problem.

    Plant model seen by the controller: CoM acceleration
    w0^2 (x - p) + (tau_a - tau_f) / (m z0) and pitch acceleration
    tau_f / I. Square system, so the weighted least-squares solution is
    exact; limits are applied by the caller.
    """
    m_z = spec.total_mass * spec.com_height_nominal
    w2 = spec.gravity / spec.com_height_nominal
    tau_f = spec.flywheel_inertia * alpha_des
    passive = w2 * (obs.com_x - obs.stance_foot_x)
    tau_a = m_z * (a_com_des - passive) + tau_f
    return tau_a, tau_f


def _clamp(value: float, limit: float) -> float:
    if value > limit:
        return limit
    if value < -limit:
        return -limit
    return value


def tm_policy(obs: RobotState, spec: RobotSpec,
              gains: BalanceGains = TM_GAINS,
              station_x: float = 0.0) -> ControlCommand:
    """Capture-point stepping with Raibert velocity regulation.

    Footstep target (relative to the CoM): vx / omega0 + k_v * vx plus a
    weak pull toward the station point so walking-in-place does not random-
    walk away under touchdown noise.
    """
    w0 = spec.omega0()
    station_pull = _clamp(gains.station_gain * (obs.com_x - station_x),
                          gains.station_step_limit)
    step = obs.com_vx / w0 + gains.k_v * obs.com_vx + station_pull
    a_des = (-gains.kp_com * (obs.com_x - station_x)
             - gains.kd_com * obs.com_vx)
    alpha_des = -gains.kp_pitch * obs.pitch - gains.kd_pitch * obs.pitch_rate
    tau_a, tau_f = solve_task_torques(obs, spec, a_des, alpha_des)
    return ControlCommand(
        ankle_torque=_clamp(tau_a, spec.ankle_torque_limit),
        flywheel_torque=_clamp(tau_f, spec.flywheel_torque_limit),
        next_footstep_x=_clamp(step, spec.max_step_length),
        desired_velocity=0.0)


@dataclass(frozen=True)
class PolicyBin:
    vx_lo: float
    vx_hi: float
    pitch_lo: float
    pitch_hi: float
    step_offset: float
    pitch_setpoint: float


@dataclass(frozen=True)
class PolicyTable:
    """Gain-scheduled setpoint lookup over (vx, pitch) bins."""

    version: str
    bins: tuple

    def lookup(self, vx: float, pitch: float) -> PolicyBin:
        """Containing bin, or the nearest bin outside the tabulated range."""
        best = None
        best_dist = math.inf
        for b in self.bins:
            dvx = 0.0 if b.vx_lo <= vx < b.vx_hi else min(
                abs(vx - b.vx_lo), abs(vx - b.vx_hi))
            dp = 0.0 if b.pitch_lo <= pitch < b.pitch_hi else min(
                abs(pitch - b.pitch_lo), abs(pitch - b.pitch_hi))
            dist = dvx + dp
            if dist < best_dist:
                best = b
                best_dist = dist
                if dist == 0.0:
                    break
        return best


_TABLE_COLUMNS = ("vx_bin_low", "vx_bin_high", "pitch_bin_low",
                  "pitch_bin_high", "step_offset_m", "pitch_setpoint_rad")
DEFAULT_TABLE_RESOURCE = "tl_policy_table_v1.csv"


def load_policy_table(path=None) -> PolicyTable:
    """Load a policy table CSV; the packaged v1 table when path is None."""
    if path is None:
        ref = resources.files("impactbench").joinpath(
            "data", DEFAULT_TABLE_RESOURCE)
        if not ref.is_file():
            raise MissingPolicyTable(DEFAULT_TABLE_RESOURCE)
        text = ref.read_text(encoding="utf-8")
        version = DEFAULT_TABLE_RESOURCE.rsplit(".", 1)[0]
    else:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except FileNotFoundError as exc:
            raise MissingPolicyTable(str(path)) from exc
        version = str(path)
    rows = list(csv.DictReader(text.splitlines()))
    if not rows:
        raise MissingPolicyTable(f"policy table {version} is empty")
    missing = set(_TABLE_COLUMNS) - set(rows[0].keys())
    if missing:
        raise ValueError(f"policy table missing columns: {sorted(missing)}")
    bins = tuple(
        PolicyBin(float(r["vx_bin_low"]), float(r["vx_bin_high"]),
                  float(r["pitch_bin_low"]), float(r["pitch_bin_high"]),
                  float(r["step_offset_m"]), float(r["pitch_setpoint_rad"]))
        for r in rows)
    return PolicyTable(version=version, bins=bins)


def tl_policy(obs: RobotState, spec: RobotSpec, table: PolicyTable,
              gains: BalanceGains = TL_GAINS,
              station_x: float = 0.0) -> ControlCommand:
    """Table-scheduled variant of the capture-point controller.

    The active bin shifts the footstep target and the pitch setpoint; the
    torque solve is identical to tm_policy. With an all-zero table the two
    policies emit identical commands.
    """
    if table is None:
        raise MissingPolicyTable("tl_analog requires a policy table")
    b = table.lookup(obs.com_vx, obs.pitch)
    w0 = spec.omega0()
    station_pull = _clamp(gains.station_gain * (obs.com_x - station_x),
                          gains.station_step_limit)
    step = (obs.com_vx / w0 + gains.k_v * obs.com_vx + station_pull
            + b.step_offset)
    a_des = (-gains.kp_com * (obs.com_x - station_x)
             - gains.kd_com * obs.com_vx)
    alpha_des = (-gains.kp_pitch * (obs.pitch - b.pitch_setpoint)
                 - gains.kd_pitch * obs.pitch_rate)
    tau_a, tau_f = solve_task_torques(obs, spec, a_des, alpha_des)
    return ControlCommand(
        ankle_torque=_clamp(tau_a, spec.ankle_torque_limit),
        flywheel_torque=_clamp(tau_f, spec.flywheel_torque_limit),
        next_footstep_x=_clamp(step, spec.max_step_length),
        desired_velocity=0.0)


def bb_policy(obs: RobotState, commanded_velocity: float, spec: RobotSpec,
              gains: BbGains = BB_GAINS) -> ControlCommand:
    """Velocity-tracking stepping without a capture-point term.

    At zero commanded velocity the policy stands still: the phase machine
    sees desired_velocity == 0 and takes no steps, leaving only ankle and
    flywheel torques to fight disturbances.
    """
    if abs(commanded_velocity) > 1.0:
        raise ValueError("commanded velocity limited to +/-1 m/s")
    step = (0.5 * spec.step_period * obs.com_vx
            + gains.raibert_gain * (obs.com_vx - commanded_velocity))
    a_des = (-gains.kp_bal * (obs.com_x - obs.stance_foot_x)
             + gains.kd_track * (commanded_velocity - obs.com_vx))
    alpha_des = -gains.kp_pitch * obs.pitch - gains.kd_pitch * obs.pitch_rate
    tau_a, tau_f = solve_task_torques(obs, spec, a_des, alpha_des)
    return ControlCommand(
        ankle_torque=_clamp(tau_a, spec.ankle_torque_limit),
        flywheel_torque=_clamp(tau_f, spec.flywheel_torque_limit),
        next_footstep_x=_clamp(step, spec.max_step_length),
        desired_velocity=commanded_velocity)


def operator_nudge(obs: RobotState, target_point: float, gain: float = 2.0,
                   dead_band: float = 0.01, limit: float = 0.1) -> float:
    """Small velocity command a human operator would give to hold station.

    Proportional to the position error, dead-banded at +/-1 cm and hard
    limited to +/-0.1 m/s.
    """
    error = target_point - obs.com_x
    if abs(error) <= dead_band:
        return 0.0
    return _clamp(gain * error, limit)


@dataclass(frozen=True)
class GaitConfig:
    """Per-controller stepping behaviour stamped into the RobotSpec."""

    step_period: float
    swing_apex: float
    dual_support_fraction: float
    min_step_interval: float
    reactive_step_threshold: Optional[float]
    stand_when_idle: bool
    initiation_hold: float


_KIND_GAIT = {
    ControllerKind.TM_ANALOG: GaitConfig(
        step_period=0.4, swing_apex=0.08, dual_support_fraction=0.2,
        min_step_interval=0.12, reactive_step_threshold=0.5,
        stand_when_idle=False, initiation_hold=0.0),
    ControllerKind.TL_ANALOG: GaitConfig(
        step_period=0.35, swing_apex=0.06, dual_support_fraction=0.2,
        min_step_interval=0.12, reactive_step_threshold=None,
        stand_when_idle=False, initiation_hold=0.0),
    ControllerKind.BB_ANALOG: GaitConfig(
        step_period=0.45, swing_apex=0.05, dual_support_fraction=0.25,
        min_step_interval=0.15, reactive_step_threshold=None,
        stand_when_idle=True, initiation_hold=0.08),
}

# Settled standing position relative to the intended fixed point; the
# velocity-regulating walkers hold station a little farther from the rig
# than the actively nudged black-box subject.
_KIND_STATION_BIAS = {
    ControllerKind.TM_ANALOG: 0.04,
    ControllerKind.TL_ANALOG: 0.015,
    ControllerKind.BB_ANALOG: 0.0,
}


@dataclass
class ControllerHandle:
    """One locomotion policy bound to (at most) one running test."""

    kind: ControllerKind
    gait: GaitConfig
    station_bias: float = 0.0
    balance_gains: BalanceGains = TM_GAINS
    bb_gains: BbGains = BB_GAINS
    table: Optional[PolicyTable] = None
    nudge_gain: float = 2.0
    nudge_dead_band: float = 0.01
    nudge_limit: float = 0.1
    station_x: float = 0.0    # per-test internal state

    def apply_gait(self, spec: RobotSpec) -> RobotSpec:
        g = self.gait
        return replace(
            spec, step_period=g.step_period, swing_apex=g.swing_apex,
            dual_support_fraction=g.dual_support_fraction,
            min_step_interval=g.min_step_interval,
            reactive_step_threshold=g.reactive_step_threshold,
            stand_when_idle=g.stand_when_idle,
            initiation_hold=g.initiation_hold)

    def begin_test(self, placement_offset: float) -> "ControllerHandle":
        """Fresh per-test handle with the station reference resolved.

        The nudged black-box subject is steered back to the intended fixed
        point, so its station ignores the operator's placement error; the
        self-regulating walkers hold wherever they were placed.
        """
        if self.kind is ControllerKind.BB_ANALOG:
            station = self.station_bias
        else:
            station = placement_offset + self.station_bias
        return replace(self, station_x=station)

    def command(self, obs: RobotState, spec: RobotSpec) -> ControlCommand:
        if self.kind is ControllerKind.TM_ANALOG:
            return tm_policy(obs, spec, self.balance_gains, self.station_x)
        if self.kind is ControllerKind.TL_ANALOG:
            return tl_policy(obs, spec, self.table, self.balance_gains,
                             self.station_x)
        v_cmd = operator_nudge(obs, self.station_x, self.nudge_gain,
                               self.nudge_dead_band, self.nudge_limit)
        return bb_policy(obs, v_cmd, spec, self.bb_gains)


def make_controller(kind, table_path=None, **overrides) -> ControllerHandle:
    """Build a controller with its per-kind gait, gains and station bias."""
    kind = ControllerKind(kind) if not isinstance(kind, ControllerKind) else kind
    table = None
    if kind is ControllerKind.TL_ANALOG:
        table = load_policy_table(table_path)
    handle = ControllerHandle(
        kind=kind, gait=_KIND_GAIT[kind],
        station_bias=_KIND_STATION_BIAS[kind], table=table)
    if overrides:
        handle = replace(handle, **overrides)
    return handle
