"""Deterministic bench for disturbance-rejection testing of planar bipeds.

A pneumatic linear-impactor model drives a ram into a reduced biped running
one of three locomotion policies; a pressure-escalation campaign engine and
an analysis suite measure how much impact momentum each policy survives.
"""

__version__ = "0.1.0"

from .biped import (GaitPhase, RobotSpec, RobotState, Stance, SwingDir,
                    detect_fallover, init_state, phase_label, robot_step)
from .controllers import (ControlCommand, ControllerHandle, ControllerKind,
                          bb_policy, make_controller, operator_nudge,
                          tl_policy, tm_policy)
from .impactor import (DEFAULT_CALIBRATION, CalibrationMap, ImpactEvent,
                       ImpactorSpec, ImpactorState, OperatorAction,
                       detect_impact, fit_calibration, impact_momentum,
                       peak_velocity_from_pressure, ram_step)
from .protocol import (BenchConfig, CampaignConfig, CampaignRecord,
                       StopReason, TestRecord, escalation_schedule,
                       run_campaign, run_test)
from .simcore import (ContactState, SimConfig, TrajectoryLog, WorldState,
                      advance, contact_force)
from .analysis import (AntiMonotonePair, GapStatistics, ScatterDataset,
                       build_scatter, find_anti_monotone_pairs,
                       gap_statistics, summarize, velocity_profiles)
