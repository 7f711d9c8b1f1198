"""JSON-lines persistence for test records and the run manifest.

A campaign file holds one test-record object per line followed by a single
campaign-summary object. Floats round-trip losslessly (shortest-repr JSON),
keys are sorted, and nothing in the payload depends on wall-clock time, so
equal inputs produce byte-equal files. Unknown fields are accepted with a
warning (forward compatibility); wrong types and missing fields raise
SchemaMismatch naming the field and line.
"""

from __future__ import annotations

import hashlib
import json
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

from . import __version__ as _tool_version
from .impactor import CalibrationMap
from .protocol import CampaignConfig, CampaignRecord, StopReason, TestRecord


class SchemaMismatch(ValueError):
    def __init__(self, field_name: str, line_number: int, message: str):
        super().__init__(
            f"line {line_number}, field {field_name!r}: {message}")
        self.field_name = field_name
        self.line_number = line_number


# name -> (accepted types, may be null)
_RECORD_SCHEMA = {
    "test_id": (str, False),
    "controller_kind": (str, False),
    "pressure": ((int, float), False),
    "peak_velocity": ((int, float), True),
    "impact_velocity": ((int, float), True),
    "impact_momentum": ((int, float), True),
    "peak_to_impact_gap": ((int, float), True),
    "impact_duration": ((int, float), True),
    "phase_at_impact": (str, True),
    "fallover": (bool, False),
    "seed": (int, False),
    "trajectory_ref": (str, True),
    "valid": (bool, False),
    "invalid_reason": (str, True),
}

_SUMMARY_TYPE = "campaign_summary"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def record_to_dict(record: TestRecord) -> dict:
    return asdict(record)


def record_from_dict(data: dict, line_number: int = 0) -> TestRecord:
    known = {}
    for name, (types, nullable) in _RECORD_SCHEMA.items():
        if name not in data:
            raise SchemaMismatch(name, line_number, "missing")
        value = data[name]
        accepted = types if isinstance(types, tuple) else (types,)
        if value is None:
            if not nullable:
                raise SchemaMismatch(name, line_number, "must not be null")
        elif ((isinstance(value, bool) and bool not in accepted)
              or not isinstance(value, accepted)):
            raise SchemaMismatch(
                name, line_number,
                f"expected {types}, got {type(value).__name__}")
        known[name] = value
    extras = set(data) - set(_RECORD_SCHEMA)
    if extras:
        warnings.warn(
            f"line {line_number}: ignoring unknown fields {sorted(extras)}",
            stacklevel=2)
    return TestRecord(**known)


def campaign_summary_dict(campaign: CampaignRecord) -> dict:
    valid = [t for t in campaign.tests if t.valid]
    return {
        "record_type": _SUMMARY_TYPE,
        "controller_kind": campaign.controller_kind,
        "stop_reason": campaign.stop_reason.value,
        "test_count": len(valid),
        "invalid_count": len(campaign.tests) - len(valid),
        "fall_count": sum(1 for t in valid if t.fallover),
        "config": asdict(campaign.config),
        "calibration": campaign.calibration.to_dict(),
    }


def write_records(campaign: CampaignRecord, path) -> None:
    """Write a campaign as JSON lines: records, then one summary object."""
    lines = [canonical_json(record_to_dict(t)) for t in campaign.tests]
    lines.append(canonical_json(campaign_summary_dict(campaign)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_records(path) -> Tuple[List[TestRecord], Optional[dict]]:
    """Read a JSON-lines record file; returns (records, summary or None)."""
    records: List[TestRecord] = []
    summary = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaMismatch("<json>", lineno, str(exc)) from None
            if data.get("record_type") == _SUMMARY_TYPE:
                if summary is not None:
                    raise SchemaMismatch("record_type", lineno,
                                         "duplicate campaign summary")
                summary = data
                continue
            records.append(record_from_dict(data, lineno))
    return records, summary


def campaign_from_file(path) -> CampaignRecord:
    records, summary = read_records(path)
    if summary is None:
        raise SchemaMismatch("record_type", 0, "missing campaign summary")
    return CampaignRecord(
        controller_kind=summary["controller_kind"],
        config=CampaignConfig(**summary["config"]),
        tests=records,
        stop_reason=StopReason(summary["stop_reason"]),
        calibration=CalibrationMap.from_dict(summary["calibration"]))


@dataclass(frozen=True)
class RunManifest:
    """Provenance of one CLI run; hashes exclude timestamps."""

    tool_version: str
    config_hash: str
    calibration_hash: str
    seed_base: int
    output_paths: dict
    created_unix: float = field(default_factory=lambda: time.time())


def sha256_of(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def build_manifest(config_obj, calibration: CalibrationMap, seed_base: int,
                   output_paths: dict) -> RunManifest:
    return RunManifest(
        tool_version=_tool_version,
        config_hash=sha256_of(config_obj),
        calibration_hash=sha256_of(calibration.to_dict()),
        seed_base=seed_base,
        output_paths=output_paths)


def write_manifest(manifest: RunManifest, path) -> None:
    Path(path).write_text(
        json.dumps(asdict(manifest), sort_keys=True, indent=2) + "\n",
        encoding="utf-8")
