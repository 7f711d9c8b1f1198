"""Pneumatic linear impactor: ram model, pressure calibration, impact metrics.

The rig drives a ram of known mass along a straight rail into the subject.
The operator controls one knob, the charge pressure; an affine calibration
maps pressure to the peak ram velocity reached at the end of the drive
stroke. Everything in this module is a pure function of its inputs - the
equipment carries no internal randomness, so equal settings always produce
equal ram trajectories regardless of what is standing in front of the rig.

Sign convention: the ram travels in +x, ``ram_position`` is the x
coordinate of the ram face, and contact forces are handed in as positive
scalars that push the ram backwards (-x).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np


class PressureOutOfRange(ValueError):
    """Requested pressure lies outside the calibrated range."""


class DegenerateSamples(ValueError):
    """Calibration samples do not span at least two distinct pressures."""


class CalibrationRejected(ValueError):
    """Least-squares fit residual exceeds the acceptance bound."""


class NoContact(ValueError):
    """Trajectory contains no contact episode."""


# Acceptance bound on the affine fit: worst-case |residual| must stay below
# this, otherwise the calibration is unusable for repeatable testing.
MAX_CALIBRATION_RESIDUAL = 0.1  # m/s


@dataclass(frozen=True)
class ImpactorSpec:
    """Physical parameters of the ram and its installation geometry."""

    ram_mass: float = 6.4             # kg
    face_width: float = 0.1524        # m (6 in)
    face_height_extent: float = 0.1016  # m (4 in)
    face_center_height: float = 0.992   # m above ground
    travel_length: float = 1.0        # m, total admissible ram travel
    max_velocity: float = 10.0        # m/s, rig limit
    stroke: float = 0.3               # m, drive stroke (accelerating phase)
    standoff: float = 0.08            # m, stroke end to nominal subject surface
    coast_decel: float = 0.4          # m/s^2, rail friction during free coast

    def __post_init__(self) -> None:
        for name in ("ram_mass", "face_width", "face_height_extent",
                     "face_center_height", "travel_length", "max_velocity",
                     "stroke"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"ImpactorSpec.{name} must be positive")
        if self.coast_decel < 0.0 or self.standoff < 0.0:
            raise ValueError("coast_decel and standoff must be >= 0")


@dataclass(frozen=True)
class CalibrationMap:
    """Affine pressure -> peak-velocity map with its fit quality."""

    slope: float                      # (m/s) / PSI
    intercept: float                  # m/s
    valid_pressure_range: Tuple[float, float]  # PSI
    max_residual: float               # m/s, worst |sample - fit|

    def __post_init__(self) -> None:
        if self.slope <= 0.0:
            raise ValueError("calibration slope must be positive")
        lo, hi = self.valid_pressure_range
        if not lo <= hi:
            raise ValueError("invalid pressure range")
        if self.max_residual >= MAX_CALIBRATION_RESIDUAL:
            raise CalibrationRejected(
                f"max residual {self.max_residual:.4f} m/s >= "
                f"{MAX_CALIBRATION_RESIDUAL} m/s")

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "valid_pressure_range": list(self.valid_pressure_range),
            "max_residual": self.max_residual,
        }

    @staticmethod
    def from_dict(d: dict) -> "CalibrationMap":
        return CalibrationMap(
            slope=float(d["slope"]),
            intercept=float(d["intercept"]),
            valid_pressure_range=(float(d["valid_pressure_range"][0]),
                                  float(d["valid_pressure_range"][1])),
            max_residual=float(d["max_residual"]),
        )


# Two anchor tests at 85 and 95 PSI produced 3.89 and 4.23 m/s peaks; the
# two-point fit gives this default map. Campaigns may supply their own.
DEFAULT_CALIBRATION = CalibrationMap(
    slope=0.034, intercept=1.00,
    valid_pressure_range=(15.0, 100.0), max_residual=0.0)


class ImpactorPhase(enum.Enum):
    CHARGING = "Charging"
    ACCELERATING = "Accelerating"
    COASTING = "Coasting"
    IN_CONTACT = "InContact"
    REBOUNDING = "Rebounding"
    STOPPED = "Stopped"


# Legal forward order of phases; InContact <-> Rebounding may alternate.
_PHASE_ORDER = {
    ImpactorPhase.CHARGING: 0,
    ImpactorPhase.ACCELERATING: 1,
    ImpactorPhase.COASTING: 2,
    ImpactorPhase.IN_CONTACT: 3,
    ImpactorPhase.REBOUNDING: 4,
    ImpactorPhase.STOPPED: 5,
}


@dataclass(frozen=True)
class ImpactorState:
    """Ram kinematics along the impact axis."""

    ram_position: float               # m, x of the ram face
    ram_velocity: float               # m/s
    phase: ImpactorPhase
    peak_velocity_achieved: float     # m/s, max over history
    target_peak: Optional[float] = None  # m/s, set when armed
    start_position: float = 0.0       # m, park position (travel reference)

    def armed(self, target_peak: float) -> "ImpactorState":
        """Release the charge: begin the drive stroke toward target_peak."""
        if self.phase is not ImpactorPhase.CHARGING:
            raise ValueError("can only arm from the Charging phase")
        return replace(self, phase=ImpactorPhase.ACCELERATING,
                       target_peak=float(target_peak))


@dataclass(frozen=True)
class OperatorAction:
    """Everything the human operator chooses for one test."""

    pressure: float                   # PSI
    placement_offset: float = 0.0     # m, subject placement error
    seed: int = 0                     # drives subject-side uncertainty only


def peak_velocity_from_pressure(pressure: float, calib: CalibrationMap) -> float:
    """Evaluate the calibration map; reject out-of-range pressures."""
    lo, hi = calib.valid_pressure_range
    if not lo <= pressure <= hi:
        raise PressureOutOfRange(
            f"pressure {pressure} PSI outside calibrated range [{lo}, {hi}]")
    return calib.slope * pressure + calib.intercept


def fit_calibration(samples: Sequence[Tuple[float, float]]) -> CalibrationMap:
    """Ordinary least-squares affine fit of (pressure, peak velocity) pairs.

    Raises DegenerateSamples without two distinct pressures and
    CalibrationRejected when the worst residual reaches 0.1 m/s.
    """
    if len(samples) < 2:
        raise DegenerateSamples("need at least two calibration samples")
    p = np.asarray([s[0] for s in samples], dtype=float)
    v = np.asarray([s[1] for s in samples], dtype=float)
    if np.ptp(p) == 0.0:
        raise DegenerateSamples("all calibration pressures are equal")
    slope, intercept = np.polyfit(p, v, 1)
    residuals = v - (slope * p + intercept)
    max_residual = float(np.max(np.abs(residuals)))
    if max_residual >= MAX_CALIBRATION_RESIDUAL:
        raise CalibrationRejected(
            f"max residual {max_residual:.4f} m/s >= "
            f"{MAX_CALIBRATION_RESIDUAL} m/s")
    return CalibrationMap(
        slope=float(slope), intercept=float(intercept),
        valid_pressure_range=(float(np.min(p)), float(np.max(p))),
        max_residual=max_residual)


def load_calibration_csv(path) -> list:
    """Read (pressure_psi, peak_velocity_mps) rows; report bad lines."""
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if lineno == 1 and line.lower().replace(" ", "").startswith(
                    "pressure_psi"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(
                    f"{path}:{lineno}: expected 'pressure,velocity', got {line!r}")
            try:
                samples.append((float(parts[0]), float(parts[1])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return samples


def impact_momentum(spec: ImpactorSpec, impact_velocity: float) -> float:
    """Momentum the rig delivers at the moment of impact: m_ram * v_impact."""
    if impact_velocity < 0.0:
        raise ValueError("impact velocity must be >= 0")
    return spec.ram_mass * impact_velocity


def ram_step(state: ImpactorState, spec: ImpactorSpec, target_peak: Optional[float],
             contact_force: float, dt: float) -> ImpactorState:
    """Advance the ram one step of size dt (semi-implicit Euler).

    Drive profile: constant acceleration over the stroke until the peak
    velocity is reached, then an unpowered coast with rail friction. While
    ``contact_force`` > 0 the drive is done and the ram decelerates purely
    under the (positive, backwards-pushing) contact force. After separation
    a backwards-moving ram keeps rolling out as Rebounding until friction
    or the travel limit parks it.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    phase = state.phase
    if phase in (ImpactorPhase.CHARGING, ImpactorPhase.STOPPED):
        return state

    v = state.ram_velocity
    if contact_force > 0.0:
        phase = ImpactorPhase.IN_CONTACT
        v += (-contact_force / spec.ram_mass) * dt
    elif phase is ImpactorPhase.IN_CONTACT:
        # Separated this step: keep rolling with whatever velocity is left.
        phase = (ImpactorPhase.REBOUNDING if v < 0.0
                 else ImpactorPhase.COASTING)

    if contact_force <= 0.0:
        if phase is ImpactorPhase.ACCELERATING:
            tp = target_peak if target_peak is not None else state.target_peak
            if tp is None:
                raise ValueError("accelerating ram has no target peak velocity")
            tp = min(tp, spec.max_velocity)
            accel = tp * tp / (2.0 * spec.stroke)
            v = min(v + accel * dt, tp)
            if v >= tp:
                v = tp
                phase = ImpactorPhase.COASTING
        elif phase is ImpactorPhase.COASTING:
            v -= spec.coast_decel * dt
            if v <= 0.0:
                v = 0.0
                phase = ImpactorPhase.STOPPED
        elif phase is ImpactorPhase.REBOUNDING:
            v += spec.coast_decel * dt
            if v >= 0.0:
                v = 0.0
                phase = ImpactorPhase.STOPPED

    pos = state.ram_position + v * dt

    # Hard travel limits of the rail.
    if pos - state.start_position >= spec.travel_length:
        pos = state.start_position + spec.travel_length
        v = 0.0
        phase = ImpactorPhase.STOPPED
    elif pos <= state.start_position and phase is ImpactorPhase.REBOUNDING:
        pos = state.start_position
        v = 0.0
        phase = ImpactorPhase.STOPPED

    peak = state.peak_velocity_achieved
    if v > peak:
        peak = v
    return ImpactorState(
        ram_position=pos, ram_velocity=v, phase=phase,
        peak_velocity_achieved=peak,
        target_peak=state.target_peak if target_peak is None else target_peak,
        start_position=state.start_position)


@dataclass(frozen=True)
class ImpactEvent:
    """Measured quantities of one contact episode in a ram trajectory."""

    impact_time: float            # s, first sample with contact force > 0
    impact_velocity: float        # m/s, ram velocity at that sample
    peak_velocity: float          # m/s, max ram velocity before impact
    peak_time: float              # s, first sample reaching the peak
    peak_to_impact_gap: float     # s, impact_time - peak_time
    impact_duration: float        # s, length of the force-positive window
    separation_time: float        # s, first force-free sample after impact
    rebound_velocity: float       # m/s, ram velocity at separation sample


def detect_impact(trajectory: Sequence[Tuple[float, float, float]]) -> ImpactEvent:
    """Locate the contact episode in a (time, velocity, contact_force) series.

    The impact instant is the first sample with positive contact force; the
    peak is the maximum velocity at or before that instant. Contact usually
    starts between samples, so the velocity of the preceding (still force
    free) sample is the impact velocity - the first force-positive sample
    may already have lost speed into the foam. Raises NoContact when the
    series never shows a positive force.
    """
    impact_idx = None
    for i, (_, _, force) in enumerate(trajectory):
        if force > 0.0:
            impact_idx = i
            break
    if impact_idx is None:
        raise NoContact("no sample with positive contact force")

    impact_time = trajectory[impact_idx][0]
    impact_velocity = trajectory[max(impact_idx - 1, 0)][1]

    peak_velocity = -float("inf")
    peak_time = trajectory[0][0]
    for t, v, _ in trajectory[:impact_idx + 1]:
        if v > peak_velocity:
            peak_velocity = v
            peak_time = t

    sep_idx = None
    for i in range(impact_idx + 1, len(trajectory)):
        if trajectory[i][2] <= 0.0:
            sep_idx = i
            break
    if sep_idx is None:
        # Force still positive at the end of the log; close the episode there.
        sep_idx = len(trajectory) - 1
    separation_time = trajectory[sep_idx][0]
    rebound_velocity = trajectory[sep_idx][1]

    return ImpactEvent(
        impact_time=impact_time,
        impact_velocity=impact_velocity,
        peak_velocity=peak_velocity,
        peak_time=peak_time,
        peak_to_impact_gap=impact_time - peak_time,
        impact_duration=separation_time - impact_time,
        separation_time=separation_time,
        rebound_velocity=rebound_velocity)
