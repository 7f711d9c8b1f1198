"""Test pipeline and pressure-escalation campaign engine.

One test: place the subject with the operator's (seeded) error, let it
settle into walking-in-place, release the ram at the calibrated pressure,
simulate through the impact plus the observation window, then measure and
classify. One campaign: walk the pressure schedule upward, repeat per
pressure as configured, and stop early after the configured number of
consecutive falls.

Seeds are pure functions of (seed_base, test index), so re-running a
campaign reproduces every record exactly and campaigns over different
controllers with a shared seed_base present identical operator actions at
equal test indices.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from .biped import RobotSpec, init_state
from .controllers import ControllerHandle
from .impactor import (DEFAULT_CALIBRATION, CalibrationMap, ImpactorSpec,
                       ImpactorState, ImpactorPhase, OperatorAction,
                       detect_impact, NoContact, peak_velocity_from_pressure)
from .simcore import (ContactState, SimConfig, TrajectoryLog, WorldState,
                      advance)


class StopReason(enum.Enum):
    SCHEDULE_EXHAUSTED = "ScheduleExhausted"
    CONSECUTIVE_FAILS = "ConsecutiveFails"


@dataclass(frozen=True)
class BenchConfig:
    """Everything about the rig and subject that is fixed across a campaign."""

    robot_spec: RobotSpec = RobotSpec()
    impactor_spec: ImpactorSpec = ImpactorSpec()
    sim: SimConfig = SimConfig()
    calibration: CalibrationMap = DEFAULT_CALIBRATION
    settle_time: float = 2.0          # s of walking-in-place before release
    observation_window: float = 4.0   # s analysed after the impact


@dataclass(frozen=True)
class TestRecord:
    """Measured quantities and outcome of a single impact test."""

    test_id: str
    controller_kind: str
    pressure: float                   # PSI
    peak_velocity: Optional[float]    # m/s
    impact_velocity: Optional[float]  # m/s
    impact_momentum: Optional[float]  # kg m/s
    peak_to_impact_gap: Optional[float]  # s
    impact_duration: Optional[float]  # s
    phase_at_impact: Optional[str]    # e.g. "Left_Up"
    fallover: bool
    seed: int
    trajectory_ref: Optional[str] = None
    valid: bool = True
    invalid_reason: Optional[str] = None


@dataclass(frozen=True)
class CampaignConfig:
    start_pressure: float = 50.0      # PSI
    end_pressure: float = 95.0        # PSI
    pressure_step: float = 5.0        # PSI
    consecutive_fail_stop: int = 2
    observation_window: float = 4.0   # s
    repeats_per_pressure: int = 1
    seed_base: int = 0
    placement_jitter: float = 0.02    # m, operator placement error band

    def __post_init__(self) -> None:
        if self.start_pressure > self.end_pressure:
            raise ValueError("start pressure must not exceed end pressure")
        if self.pressure_step <= 0.0:
            raise ValueError("pressure step must be positive")
        if self.consecutive_fail_stop < 1:
            raise ValueError("consecutive_fail_stop must be >= 1")
        if self.repeats_per_pressure < 1:
            raise ValueError("repeats_per_pressure must be >= 1")


@dataclass(frozen=True)
class CampaignRecord:
    controller_kind: str
    config: CampaignConfig
    tests: List[TestRecord]
    stop_reason: StopReason
    calibration: CalibrationMap


def escalation_schedule(config: CampaignConfig) -> List[float]:
    """Ascending pressures from start to end; the end is always included."""
    pressures = []
    p = config.start_pressure
    while p < config.end_pressure - 1e-9:
        pressures.append(p)
        p += config.pressure_step
    pressures.append(config.end_pressure)
    return pressures


def derive_test_seed(seed_base: int, test_index: int) -> int:
    """Deterministic per-test seed; pure in (seed_base, test_index)."""
    ss = np.random.SeedSequence((seed_base, test_index))
    return int(ss.generate_state(1, np.uint64)[0])


def derive_placement_offset(seed_base: int, test_index: int,
                            jitter: float) -> float:
    """Operator placement error for one test; pure in its arguments."""
    rng = np.random.default_rng(
        np.random.SeedSequence((seed_base, test_index, 1)))
    return float(rng.uniform(-jitter, jitter))


def run_test(controller: ControllerHandle, action: OperatorAction,
             bench: BenchConfig, test_id: str = "test",
             trajectory: Optional[TrajectoryLog] = None) -> TestRecord:
    """Execute one impact test and assemble its record.

    A shot whose ram never reaches the subject (it parks short, or the
    horizon runs out before contact) is returned as an invalid record with
    ``invalid_reason = "no_contact"`` rather than raised; the campaign
    keeps it out of both statistics and the fail counter.
    """
    target_peak = peak_velocity_from_pressure(action.pressure,
                                              bench.calibration)
    sim = bench.sim
    rspec = replace(controller.apply_gait(bench.robot_spec),
                    gravity=sim.gravity)
    ispec = bench.impactor_spec
    handle = controller.begin_test(action.placement_offset)

    rng = np.random.default_rng(np.random.SeedSequence(action.seed))
    # Draw order is part of the record contract: phase fraction first, then
    # the initial-state draws inside init_state.
    phase_fraction = float(rng.uniform(0.0, 1.0))
    robot = init_state(action.placement_offset, phase_fraction, rspec, rng)

    ram_start = -(sim.torso_half_depth + ispec.standoff + ispec.stroke)
    impactor = ImpactorState(
        ram_position=ram_start, ram_velocity=0.0,
        phase=ImpactorPhase.CHARGING, peak_velocity_achieved=0.0,
        target_peak=None, start_position=ram_start)

    world = WorldState(
        tick=0, time=0.0, robot=robot, impactor=impactor,
        contact=ContactState(), rng=rng, robot_spec=rspec,
        impactor_spec=ispec)

    log = trajectory if trajectory is not None else TrajectoryLog()
    max_ticks = int(round(sim.horizon / sim.dt))
    window = bench.observation_window
    armed = False

    while world.tick < max_ticks:
        if not armed and world.time >= bench.settle_time:
            world = replace_world_impactor(world,
                                           world.impactor.armed(target_peak))
            armed = True
        log.capture(world, sim)
        world = advance(world, sim, handle)
        first_t = world.contact.first_contact_time
        if first_t is not None and world.time >= first_t + window:
            break
        if (world.impactor.phase is ImpactorPhase.STOPPED
                and first_t is None and armed):
            break  # ram parked short of the subject: no contact possible
    log.capture(world, sim)

    first_t = world.contact.first_contact_time
    if first_t is None:
        return TestRecord(
            test_id=test_id, controller_kind=controller.kind.value,
            pressure=action.pressure, peak_velocity=None,
            impact_velocity=None, impact_momentum=None,
            peak_to_impact_gap=None, impact_duration=None,
            phase_at_impact=None, fallover=False, seed=action.seed,
            valid=False, invalid_reason="no_contact")

    event = detect_impact(log.ram_series())
    impact_idx = int(round(event.impact_time / sim.dt))
    phase = log.states[impact_idx].gait

    from .biped import detect_fallover
    fall_states = log.states[impact_idx:]
    fallover = detect_fallover(fall_states, rspec, sim.dt,
                               window_length=window)

    separation = world.contact.separation_time
    duration = (separation - first_t if separation is not None
                else event.impact_duration)

    return TestRecord(
        test_id=test_id, controller_kind=controller.kind.value,
        pressure=action.pressure,
        peak_velocity=event.peak_velocity,
        impact_velocity=event.impact_velocity,
        impact_momentum=ispec.ram_mass * event.impact_velocity,
        peak_to_impact_gap=event.peak_to_impact_gap,
        impact_duration=duration,
        phase_at_impact=phase.label(),
        fallover=fallover, seed=action.seed)


def replace_world_impactor(world: WorldState,
                           impactor: ImpactorState) -> WorldState:
    return WorldState(
        tick=world.tick, time=world.time, robot=world.robot,
        impactor=impactor, contact=world.contact, rng=world.rng,
        robot_spec=world.robot_spec, impactor_spec=world.impactor_spec)


TestRunner = Callable[[ControllerHandle, OperatorAction, BenchConfig, str,
                       Optional[TrajectoryLog]], TestRecord]


def run_campaign(controller: ControllerHandle, config: CampaignConfig,
                 bench: Optional[BenchConfig] = None,
                 runner: TestRunner = run_test,
                 trajectory_sink: Optional[Callable] = None) -> CampaignRecord:
    """Walk the escalation schedule until it is exhausted or the subject
    falls ``consecutive_fail_stop`` times in a row.

    Invalid tests are recorded but neither feed nor reset the fail counter.
    ``trajectory_sink(index, record, log)`` receives every test's log when
    provided (fairness audits, CSV dumps).
    """
    if bench is None:
        bench = BenchConfig()
    bench = replace(bench, observation_window=config.observation_window)

    tests: List[TestRecord] = []
    consecutive = 0
    stop_reason = StopReason.SCHEDULE_EXHAUSTED
    index = 0

    for pressure in escalation_schedule(config):
        stopped = False
        for _ in range(config.repeats_per_pressure):
            action = OperatorAction(
                pressure=pressure,
                placement_offset=derive_placement_offset(
                    config.seed_base, index, config.placement_jitter),
                seed=derive_test_seed(config.seed_base, index))
            test_id = f"{controller.kind.value}-{index:03d}"
            log = TrajectoryLog() if trajectory_sink is not None else None
            record = runner(controller, action, bench, test_id, log)
            tests.append(record)
            if trajectory_sink is not None:
                trajectory_sink(index, record, log)
            index += 1
            if record.valid:
                consecutive = consecutive + 1 if record.fallover else 0
                if consecutive >= config.consecutive_fail_stop:
                    stop_reason = StopReason.CONSECUTIVE_FAILS
                    stopped = True
                    break
        if stopped:
            break

    return CampaignRecord(
        controller_kind=controller.kind.value, config=config, tests=tests,
        stop_reason=stop_reason, calibration=bench.calibration)


def precontact_ram_hash(log: TrajectoryLog,
                        upto_tick: Optional[int] = None) -> str:
    """Hash of the ram trajectory before contact (fairness audits).

    Covers (ram position, ram velocity) rows up to ``upto_tick`` when
    given, else up to the first row with positive contact force.
    """
    h = hashlib.sha256()
    for row in log.rows:
        tick, _, pos, vel, force = row[0], row[1], row[2], row[3], row[4]
        if upto_tick is not None and tick >= upto_tick:
            break
        if upto_tick is None and force > 0.0:
            break
        h.update(repr((pos, vel)).encode())
    return h.hexdigest()


def first_contact_tick(log: TrajectoryLog) -> Optional[int]:
    for row in log.rows:
        if row[4] > 0.0:
            return row[0]
    return None
