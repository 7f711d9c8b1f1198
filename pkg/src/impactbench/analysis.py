"""Post-campaign metrics: gap statistics, summaries, scatter and decay data.

All functions are pure over immutable records. Invalid tests (no contact)
are excluded everywhere. Standard deviations are sample (n - 1); a single
observation reports zero deviation with its count making that explicit.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .impactor import NoContact
from .protocol import CampaignRecord, TestRecord

# Reference momentum of a straight punch by an elite boxer; a subject that
# recovers at or above this is flagged in the summary table.
BOXER_REFERENCE_MOMENTUM = 26.506  # kg m/s


class EmptyInput(ValueError):
    """No valid records to aggregate."""


class WindowExceedsLog(ValueError):
    """Requested profile window runs past the end of a trajectory."""


def _valid(records: Iterable[TestRecord]) -> List[TestRecord]:
    return [r for r in records if r.valid]


def _mean_std(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


@dataclass(frozen=True)
class GapStatistics:
    """Peak-to-impact time-gap aggregates, overall and per controller."""

    mean: float
    std: float
    count: int
    per_controller: Dict[str, Tuple[float, float, int]]


def gap_statistics(records: Sequence[TestRecord]) -> GapStatistics:
    valid = _valid(records)
    if not valid:
        raise EmptyInput("no valid records")
    gaps = [r.peak_to_impact_gap for r in valid]
    mean, std = _mean_std(gaps)
    per: Dict[str, Tuple[float, float, int]] = {}
    for kind in sorted({r.controller_kind for r in valid}):
        sub = [r.peak_to_impact_gap for r in valid
               if r.controller_kind == kind]
        m, s = _mean_std(sub)
        per[kind] = (m, s, len(sub))
    return GapStatistics(mean=mean, std=std, count=len(valid),
                         per_controller=per)


@dataclass(frozen=True)
class ScatterPoint:
    impact_velocity: float
    impact_momentum: float
    phase: str
    fallover: bool
    controller_kind: str
    test_id: str


@dataclass(frozen=True)
class ScatterDataset:
    points: Tuple[ScatterPoint, ...]

    def to_csv_rows(self) -> List[str]:
        rows = ["velocity_mps,momentum_kgmps,stance,swing,fallover,controller,test_id"]
        for p in self.points:
            stance, swing = p.phase.split("_")
            rows.append(
                f"{p.impact_velocity!r},{p.impact_momentum!r},{stance},"
                f"{swing},{int(p.fallover)},{p.controller_kind},{p.test_id}")
        return rows


def build_scatter(records: Sequence[TestRecord]) -> ScatterDataset:
    """One point per valid test record."""
    points = tuple(
        ScatterPoint(
            impact_velocity=r.impact_velocity,
            impact_momentum=r.impact_momentum,
            phase=r.phase_at_impact,
            fallover=r.fallover,
            controller_kind=r.controller_kind,
            test_id=r.test_id)
        for r in _valid(records))
    return ScatterDataset(points=points)


@dataclass(frozen=True)
class ControllerSummary:
    controller_kind: str
    test_count: int
    fall_count: int
    invalid_count: int
    max_recovered_momentum: Optional[float]
    min_fallen_momentum: Optional[float]
    boxer_benchmark: bool


def summarize(campaigns: Sequence[CampaignRecord]) -> List[ControllerSummary]:
    """Per-controller outcome table across campaigns."""
    if not campaigns:
        raise EmptyInput("no campaigns")
    by_kind: Dict[str, List[TestRecord]] = {}
    for c in campaigns:
        by_kind.setdefault(c.controller_kind, []).extend(c.tests)
    out = []
    for kind in sorted(by_kind):
        records = by_kind[kind]
        valid = _valid(records)
        recovered = [r.impact_momentum for r in valid if not r.fallover]
        fallen = [r.impact_momentum for r in valid if r.fallover]
        max_rec = max(recovered) if recovered else None
        out.append(ControllerSummary(
            controller_kind=kind,
            test_count=len(valid),
            fall_count=len(fallen),
            invalid_count=len(records) - len(valid),
            max_recovered_momentum=max_rec,
            min_fallen_momentum=min(fallen) if fallen else None,
            boxer_benchmark=(max_rec is not None
                             and max_rec >= BOXER_REFERENCE_MOMENTUM)))
    return out


def summary_csv_rows(summaries: Sequence[ControllerSummary]) -> List[str]:
    rows = ["controller,tests,falls,invalid,max_recovered_momentum,"
            "min_fallen_momentum,boxer_benchmark"]
    for s in summaries:
        max_r = "" if s.max_recovered_momentum is None else repr(
            s.max_recovered_momentum)
        min_f = "" if s.min_fallen_momentum is None else repr(
            s.min_fallen_momentum)
        rows.append(f"{s.controller_kind},{s.test_count},{s.fall_count},"
                    f"{s.invalid_count},{max_r},{min_f},"
                    f"{int(s.boxer_benchmark)}")
    return rows


@dataclass(frozen=True)
class AntiMonotonePair:
    """A fall coexisting with a recovery at strictly higher momentum."""

    low: TestRecord    # fallover at the lower momentum
    high: TestRecord   # recovery at the strictly higher momentum
    momentum_gap: float

    def __post_init__(self) -> None:
        if not (self.low.fallover and not self.high.fallover):
            raise ValueError("pair polarity: low falls, high recovers")
        if not self.low.impact_momentum < self.high.impact_momentum:
            raise ValueError("pair requires low momentum < high momentum")


def find_anti_monotone_pairs(
        records: Sequence[TestRecord]) -> List[AntiMonotonePair]:
    """All same-controller (fall, stronger recovery) inversions.

    Falls are matched against recoveries at strictly higher momentum via a
    per-controller sort and bisect, and the pair list comes back sorted by
    momentum gap ascending (ties broken by test ids for determinism).
    """
    by_kind: Dict[str, Tuple[List[TestRecord], List[TestRecord]]] = {}
    for r in _valid(records):
        falls, recoveries = by_kind.setdefault(r.controller_kind, ([], []))
        (falls if r.fallover else recoveries).append(r)

    pairs: List[AntiMonotonePair] = []
    for falls, recoveries in by_kind.values():
        recoveries.sort(key=lambda r: r.impact_momentum)
        momenta = [r.impact_momentum for r in recoveries]
        for fall in falls:
            start = bisect.bisect_right(momenta, fall.impact_momentum)
            for rec in recoveries[start:]:
                pairs.append(AntiMonotonePair(
                    low=fall, high=rec,
                    momentum_gap=rec.impact_momentum - fall.impact_momentum))
    pairs.sort(key=lambda p: (p.momentum_gap, p.low.test_id, p.high.test_id))
    return pairs


@dataclass(frozen=True)
class VelocityProfile:
    """Ram velocity resampled onto a common window aligned at impact."""

    controller_kind: str
    test_id: str
    times: Tuple[float, ...]       # s since impact
    velocities: Tuple[float, ...]  # m/s


def velocity_profiles(trajectories: Sequence[Tuple[str, str, Sequence[Tuple[float, float, float]]]],
                      window: float = 0.05,
                      sample_rate: float = 1000.0) -> List[VelocityProfile]:
    """Per-test ram velocity decay curves over [0, window] from impact.

    Each input is (controller_kind, test_id, (time, velocity, force)
    series). Linear interpolation onto a 1 kHz grid by default. Raises
    NoContact for a series without a contact episode and WindowExceedsLog
    when the log ends before the window does.
    """
    out: List[VelocityProfile] = []
    n_samples = int(round(window * sample_rate)) + 1
    rel_times = tuple(i / sample_rate for i in range(n_samples))
    for kind, test_id, series in trajectories:
        impact_time = None
        for t, _, force in series:
            if force > 0.0:
                impact_time = t
                break
        if impact_time is None:
            raise NoContact(f"{test_id}: no contact episode in trajectory")
        t_end = series[-1][0]
        if impact_time + window > t_end + 1e-12:
            raise WindowExceedsLog(
                f"{test_id}: window ends {impact_time + window:.4f} s but "
                f"log ends {t_end:.4f} s")
        ts = np.asarray([row[0] for row in series], dtype=float)
        vs = np.asarray([row[1] for row in series], dtype=float)
        sampled = np.interp(np.asarray(rel_times) + impact_time, ts, vs)
        out.append(VelocityProfile(
            controller_kind=kind, test_id=test_id, times=rel_times,
            velocities=tuple(float(v) for v in sampled)))
    return out


def profiles_csv_rows(profiles: Sequence[VelocityProfile]) -> List[str]:
    rows = ["controller,test_id,t_s,v_mps"]
    for p in profiles:
        for t, v in zip(p.times, p.velocities):
            rows.append(f"{p.controller_kind},{p.test_id},{t!r},{v!r}")
    return rows
