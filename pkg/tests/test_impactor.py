from __future__ import annotations

import inspect
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import impactbench.impactor as impactor_module
from impactbench.impactor import (
    DEFAULT_CALIBRATION, CalibrationMap, CalibrationRejected,
    DegenerateSamples, ImpactorPhase, ImpactorSpec, ImpactorState, NoContact,
    PressureOutOfRange, detect_impact, fit_calibration, impact_momentum,
    load_calibration_csv, peak_velocity_from_pressure, ram_step)


# -- calibration map -------------------------------------------------------

def test_default_calibration_anchor_pressures():
    assert peak_velocity_from_pressure(85.0, DEFAULT_CALIBRATION) == \
        pytest.approx(3.89, rel=1e-12)
    assert peak_velocity_from_pressure(95.0, DEFAULT_CALIBRATION) == \
        pytest.approx(4.23, rel=1e-12)
    assert peak_velocity_from_pressure(50.0, DEFAULT_CALIBRATION) == \
        pytest.approx(2.70, rel=1e-12)


def test_pressure_out_of_range_rejected():
    with pytest.raises(PressureOutOfRange):
        peak_velocity_from_pressure(10.0, DEFAULT_CALIBRATION)
    with pytest.raises(PressureOutOfRange):
        peak_velocity_from_pressure(120.0, DEFAULT_CALIBRATION)


@given(st.floats(15.0, 100.0), st.floats(15.0, 100.0))
def test_repeatability_exact_lipschitz(p1, p2):
    # Pure affine map: velocity differences scale exactly with the slope.
    v1 = peak_velocity_from_pressure(p1, DEFAULT_CALIBRATION)
    v2 = peak_velocity_from_pressure(p2, DEFAULT_CALIBRATION)
    assert abs(v1 - v2) == pytest.approx(
        DEFAULT_CALIBRATION.slope * abs(p1 - p2), rel=1e-9, abs=1e-12)


def test_equipment_module_uses_no_generator_state():
    source = inspect.getsource(impactor_module)
    for token in ("np.random", "default_rng", "Generator(", ".rng"):
        assert token not in source


def test_fit_two_point_interpolation():
    calib = fit_calibration([(85.0, 3.89), (95.0, 4.23)])
    assert calib.slope == pytest.approx(0.034, rel=1e-9)
    assert calib.intercept == pytest.approx(1.00, rel=1e-9)
    assert calib.max_residual == pytest.approx(0.0, abs=1e-12)
    assert calib.valid_pressure_range == (85.0, 95.0)


def test_fit_recovers_exact_line():
    samples = [(p, 0.03 * p + 1.2) for p in (40.0, 55.0, 70.0, 85.0, 100.0)]
    calib = fit_calibration(samples)
    assert calib.slope == pytest.approx(0.03, rel=1e-9)
    assert calib.intercept == pytest.approx(1.2, rel=1e-9)
    assert calib.max_residual < 1e-12


def _ols_residuals(samples):
    # Independent oracle: explicit normal equations, two unknowns.
    n = len(samples)
    sp = sum(p for p, _ in samples)
    sv = sum(v for _, v in samples)
    spp = sum(p * p for p, _ in samples)
    spv = sum(p * v for p, v in samples)
    det = n * spp - sp * sp
    slope = (n * spv - sp * sv) / det
    intercept = (sv * spp - sp * spv) / det
    return [v - (slope * p + intercept) for p, v in samples]


def test_fit_rejects_perturbed_point():
    samples = [(p, 0.03 * p + 1.2) for p in (40.0, 55.0, 70.0, 85.0, 100.0)]
    samples[2] = (samples[2][0], samples[2][1] + 0.2)
    worst = max(abs(r) for r in _ols_residuals(samples))
    assert worst >= 0.1  # the oracle confirms the bound is genuinely broken
    with pytest.raises(CalibrationRejected):
        fit_calibration(samples)


def test_fit_degenerate_samples():
    with pytest.raises(DegenerateSamples):
        fit_calibration([(50.0, 2.7)])
    with pytest.raises(DegenerateSamples):
        fit_calibration([(50.0, 2.7), (50.0, 2.8), (50.0, 2.6)])


def test_calibration_map_rejects_large_residual_on_construction():
    with pytest.raises(CalibrationRejected):
        CalibrationMap(slope=0.03, intercept=1.0,
                       valid_pressure_range=(40.0, 100.0), max_residual=0.15)


def test_load_calibration_csv_reports_bad_line(tmp_path):
    path = tmp_path / "cal.csv"
    path.write_text("pressure_psi,peak_velocity_mps\n85,3.89\nnonsense\n")
    with pytest.raises(ValueError, match=":3"):
        load_calibration_csv(path)


# -- impact momentum -------------------------------------------------------

def test_impact_momentum_reference_value(impactor_spec):
    assert impact_momentum(impactor_spec, 4.12125) == \
        pytest.approx(26.376, rel=1e-12)


def test_impact_momentum_zero(impactor_spec):
    assert impact_momentum(impactor_spec, 0.0) == 0.0


def test_impact_momentum_small_velocity_difference(impactor_spec):
    gap = (impact_momentum(impactor_spec, 3.216)
           - impact_momentum(impactor_spec, 3.214))
    assert gap == pytest.approx(0.0128, rel=1e-9)


def test_impact_momentum_rejects_negative(impactor_spec):
    with pytest.raises(ValueError):
        impact_momentum(impactor_spec, -0.1)


@given(st.floats(0.0, 10.0), st.floats(0.1, 50.0))
def test_impact_momentum_linear(velocity, mass):
    spec = ImpactorSpec(ram_mass=mass)
    base = impact_momentum(spec, velocity)
    assert impact_momentum(spec, 2.0 * velocity) == pytest.approx(
        2.0 * base, rel=1e-12, abs=1e-12)
    spec2 = ImpactorSpec(ram_mass=2.0 * mass)
    assert impact_momentum(spec2, velocity) == pytest.approx(
        2.0 * base, rel=1e-12, abs=1e-12)


# -- ram stepping ----------------------------------------------------------

def _coasting_state(velocity, position=0.0):
    return ImpactorState(
        ram_position=position, ram_velocity=velocity,
        phase=ImpactorPhase.COASTING, peak_velocity_achieved=velocity,
        target_peak=velocity, start_position=-0.5)


def test_free_coast_holds_velocity():
    spec = ImpactorSpec(coast_decel=0.0)
    state = _coasting_state(3.0)
    for _ in range(100):
        state = ram_step(state, spec, None, 0.0, 1e-3)
    assert state.ram_velocity == 3.0
    assert state.phase is ImpactorPhase.COASTING


def test_contact_impulse_stops_ram_exactly():
    # 6.4 kg at 4.23 m/s carries 27.072 kg m/s; that much impulse parks it.
    spec = ImpactorSpec(coast_decel=0.0)
    state = _coasting_state(4.23)
    steps, h = 1000, 1e-4
    force = 27.072 / (steps * h)
    for _ in range(steps):
        state = ram_step(state, spec, None, force, h)
    assert abs(state.ram_velocity) < 1e-9
    assert state.phase is ImpactorPhase.IN_CONTACT


def test_drive_reaches_exact_peak_then_coasts():
    spec = ImpactorSpec()
    state = ImpactorState(
        ram_position=-0.48, ram_velocity=0.0, phase=ImpactorPhase.CHARGING,
        peak_velocity_achieved=0.0, start_position=-0.48)
    state = state.armed(3.89)
    assert state.phase is ImpactorPhase.ACCELERATING
    seen_peak = 0.0
    for _ in range(5000):
        state = ram_step(state, spec, None, 0.0, 1e-3)
        seen_peak = max(seen_peak, state.ram_velocity)
        if state.phase is not ImpactorPhase.ACCELERATING:
            break
    assert state.phase is ImpactorPhase.COASTING
    assert state.ram_velocity == 3.89
    # drive distance matches the configured stroke
    assert state.ram_position - state.start_position == \
        pytest.approx(spec.stroke, rel=0.01)


def test_charging_holds_still():
    spec = ImpactorSpec()
    state = ImpactorState(
        ram_position=-0.48, ram_velocity=0.0, phase=ImpactorPhase.CHARGING,
        peak_velocity_achieved=0.0, start_position=-0.48)
    stepped = ram_step(state, spec, None, 0.0, 1e-3)
    assert stepped == state


def test_rebound_then_stop_at_park_position():
    spec = ImpactorSpec()
    state = ImpactorState(
        ram_position=-0.1, ram_velocity=-0.5, phase=ImpactorPhase.REBOUNDING,
        peak_velocity_achieved=4.0, start_position=-0.12)
    for _ in range(2000):
        state = ram_step(state, spec, None, 0.0, 1e-3)
        if state.phase is ImpactorPhase.STOPPED:
            break
    assert state.phase is ImpactorPhase.STOPPED
    assert state.ram_velocity == 0.0
    assert state.ram_position >= state.start_position


def test_travel_limit_stops_ram():
    spec = ImpactorSpec(travel_length=0.5, coast_decel=0.0)
    state = _coasting_state(5.0, position=0.0)
    state = ImpactorState(**{**state.__dict__, "start_position": 0.0}) \
        if hasattr(state, "__dict__") else state
    state = ImpactorState(
        ram_position=0.0, ram_velocity=5.0, phase=ImpactorPhase.COASTING,
        peak_velocity_achieved=5.0, start_position=0.0)
    for _ in range(1000):
        state = ram_step(state, spec, None, 0.0, 1e-3)
        if state.phase is ImpactorPhase.STOPPED:
            break
    assert state.phase is ImpactorPhase.STOPPED
    assert state.ram_position == pytest.approx(0.5)


# -- impact detection ------------------------------------------------------

def _synthetic_trace():
    # Coast at 4.0 m/s from t = 1.0 s; contact begins at t = 1.05 s.
    trace = []
    t = 1.0
    v = 4.0
    while t < 1.2:
        force = 800.0 if 1.05 <= t < 1.08 else 0.0
        trace.append((round(t, 4), v, force))
        if force > 0.0:
            v -= force / 6.4 * 0.005
        t += 0.005
    return trace


def test_detect_impact_synthetic_trace():
    event = detect_impact(_synthetic_trace())
    assert event.impact_time == pytest.approx(1.05)
    assert event.impact_velocity == pytest.approx(4.0)
    assert event.peak_velocity == pytest.approx(4.0)
    assert event.peak_to_impact_gap == pytest.approx(0.05)
    assert event.impact_duration == pytest.approx(0.03, abs=0.006)


def test_detect_impact_requires_contact():
    trace = [(t * 0.01, 3.0, 0.0) for t in range(100)]
    with pytest.raises(NoContact):
        detect_impact(trace)


def test_detect_impact_gap_zero_when_contact_at_peak():
    trace = [(0.0, 4.0, 0.0), (0.01, 4.0, 500.0), (0.02, 3.0, 0.0)]
    event = detect_impact(trace)
    assert event.peak_to_impact_gap == pytest.approx(0.01)
    assert event.rebound_velocity == pytest.approx(3.0)
