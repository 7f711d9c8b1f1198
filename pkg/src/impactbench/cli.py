"""Command-line entry point tying the pipeline together.

Subcommands: ``calibrate`` (fit a pressure map from samples), ``run-test``
(one impact test), ``run-campaign`` (escalation campaigns from a TOML
config, optionally several controllers in parallel), ``analyze`` (metrics
from record files) and ``plot`` (SVG figures). Exit codes: 0 success,
1 usage error, 2 runtime error. All produced paths are printed to stdout.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .analysis import (build_scatter, find_anti_monotone_pairs,
                       gap_statistics, profiles_csv_rows, summarize,
                       summary_csv_rows, velocity_profiles)
from .biped import RobotSpec
from .controllers import ControllerKind, make_controller
from .impactor import (DEFAULT_CALIBRATION, CalibrationMap, OperatorAction,
                       fit_calibration, load_calibration_csv)
from .plots import calibration_svg, profiles_svg, scatter_svg
from .protocol import (BenchConfig, CampaignConfig, ImpactorSpec, run_campaign,
                       run_test)
from .records import (build_manifest, campaign_from_file, read_records,
                      record_to_dict, canonical_json, write_manifest,
                      write_records)
from .simcore import SimConfig

OUTPUT_DIR_ENV = "IMPACTBENCH_OUT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 for usage problems, not 2
        raise UsageError(message)


def _output_dir(explicit) -> Path:
    if explicit:
        path = Path(explicit)
    else:
        path = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    path.mkdir(parents=True, exist_ok=True)
    return path


_CAMPAIGN_KEYS = {f.name for f in dataclasses.fields(CampaignConfig)}
_SECTION_TYPES = {"robot": RobotSpec, "sim": SimConfig,
                  "impactor": ImpactorSpec}
_TOP_KEYS = {"campaign", "controllers", "controller", "calibration_file",
             "output_dir", "log_trajectories", "robot", "sim", "impactor"}


def _load_campaign_config(path: Path):
    """Parse and validate the campaign TOML; returns (cfg, bench, extras)."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise RuntimeError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise RuntimeError(f"{path}: {exc}")

    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise UsageError(f"{path}: unknown config keys {sorted(unknown)}")

    camp_raw = raw.get("campaign", {})
    unknown = set(camp_raw) - _CAMPAIGN_KEYS
    if unknown:
        raise UsageError(
            f"{path}: unknown [campaign] keys {sorted(unknown)}")
    try:
        campaign = CampaignConfig(**camp_raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{path}: bad [campaign] section: {exc}")

    sections = {}
    for name, cls in _SECTION_TYPES.items():
        body = raw.get(name, {})
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = set(body) - allowed
        if unknown:
            raise UsageError(
                f"{path}: unknown [{name}] keys {sorted(unknown)}")
        try:
            sections[name] = cls(**body)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"{path}: bad [{name}] section: {exc}")

    if "controllers" in raw:
        controllers = list(raw["controllers"])
    elif "controller" in raw:
        controllers = [raw["controller"]]
    else:
        controllers = [k.value for k in ControllerKind]
    for kind in controllers:
        try:
            ControllerKind(kind)
        except ValueError:
            raise UsageError(f"{path}: unknown controller {kind!r}")

    calibration = DEFAULT_CALIBRATION
    if raw.get("calibration_file"):
        cal_path = Path(raw["calibration_file"])
        if not cal_path.is_absolute():
            cal_path = path.parent / cal_path
        calibration = fit_calibration(load_calibration_csv(cal_path))

    bench = BenchConfig(
        robot_spec=sections["robot"], impactor_spec=sections["impactor"],
        sim=sections["sim"], calibration=calibration,
        observation_window=campaign.observation_window)
    extras = {
        "output_dir": raw.get("output_dir"),
        "log_trajectories": bool(raw.get("log_trajectories", False)),
        "controllers": controllers,
        "raw": raw,
    }
    return campaign, bench, extras


def _campaign_worker(args):
    kind, campaign, bench, out_dir_s, log_trajectories = args
    out_dir = Path(out_dir_s)
    controller = make_controller(kind)
    sink = None
    traj_dir = out_dir / "trajectories"
    written = []
    if log_trajectories:
        traj_dir.mkdir(parents=True, exist_ok=True)

        def sink(index, record, log):
            ref = traj_dir / f"{record.test_id}.csv"
            log.write_csv(ref)
            written.append(str(ref))

    result = run_campaign(controller, campaign, bench,
                          trajectory_sink=sink)
    if log_trajectories:
        result = dataclasses.replace(result, tests=[
            dataclasses.replace(
                t, trajectory_ref=str(traj_dir / f"{t.test_id}.csv"))
            for t in result.tests])
    out_path = out_dir / f"campaign_{kind}.jsonl"
    write_records(result, out_path)
    return kind, str(out_path)


def _cmd_calibrate(args) -> int:
    samples = load_calibration_csv(args.samples)
    calib = fit_calibration(samples)
    print(f"slope {calib.slope:.6g} (m/s)/PSI, intercept "
          f"{calib.intercept:.6g} m/s, max residual "
          f"{calib.max_residual:.6g} m/s, range "
          f"{calib.valid_pressure_range[0]:g}-"
          f"{calib.valid_pressure_range[1]:g} PSI")
    out_dir = _output_dir(args.out_dir)
    out = out_dir / "calibration.json"
    out.write_text(json.dumps(calib.to_dict(), sort_keys=True, indent=2)
                   + "\n", encoding="utf-8")
    print(out)
    return 0


def _cmd_run_test(args) -> int:
    controller = make_controller(args.controller)
    action = OperatorAction(pressure=args.pressure,
                            placement_offset=args.offset, seed=args.seed)
    record = run_test(controller, action, BenchConfig(),
                      test_id=f"{args.controller}-single")
    print(canonical_json(record_to_dict(record)))
    if args.out:
        out = Path(args.out)
        out.write_text(canonical_json(record_to_dict(record)) + "\n",
                       encoding="utf-8")
        print(out)
    return 0


def _cmd_run_campaign(args) -> int:
    campaign, bench, extras = _load_campaign_config(Path(args.config))
    out_dir = _output_dir(args.out_dir or extras["output_dir"])
    jobs = max(1, args.jobs)
    tasks = [(kind, campaign, bench, str(out_dir), extras["log_trajectories"])
             for kind in extras["controllers"]]

    outputs = {}
    if jobs == 1 or len(tasks) == 1:
        results = [_campaign_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_campaign_worker, tasks))
    for kind, path in results:
        outputs[kind] = path
        print(path)

    manifest = build_manifest(extras["raw"], bench.calibration,
                              campaign.seed_base, outputs)
    manifest_path = out_dir / "manifest.json"
    write_manifest(manifest, manifest_path)
    print(manifest_path)
    return 0


def _cmd_analyze(args) -> int:
    records = []
    for path in args.records:
        recs, _ = read_records(path)
        records.extend(recs)
    campaigns = [campaign_from_file(p) for p in args.records]
    out_dir = _output_dir(args.out_dir)

    stats = gap_statistics(records)
    print(f"peak-to-impact gap: {stats.mean:.4f} (+/-{stats.std:.4f}) s "
          f"over {stats.count} tests")
    for kind, (m, s, n) in stats.per_controller.items():
        print(f"  {kind}: {m:.4f} (+/-{s:.4f}) s, n={n}")

    summary_path = out_dir / "summary.csv"
    summary_path.write_text(
        "\n".join(summary_csv_rows(summarize(campaigns))) + "\n",
        encoding="utf-8")
    print(summary_path)

    scatter_path = out_dir / "scatter.csv"
    scatter_path.write_text(
        "\n".join(build_scatter(records).to_csv_rows()) + "\n",
        encoding="utf-8")
    print(scatter_path)

    pairs = find_anti_monotone_pairs(records)
    print(f"anti-monotone pairs: {len(pairs)}")
    for p in pairs[:10]:
        print(f"  {p.low.test_id} fell at {p.low.impact_momentum:.3f} "
              f"kg m/s but {p.high.test_id} recovered at "
              f"{p.high.impact_momentum:.3f} (gap {p.momentum_gap:.4f})")
    return 0


def _read_trajectory_csv(path: Path):
    series = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        try:
            it = header.index("time_s")
            iv = header.index("ram_vel_mps")
            ic = header.index("contact_force_N")
        except ValueError:
            raise RuntimeError(f"{path}:1: not a trajectory CSV")
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            try:
                series.append((float(parts[it]), float(parts[iv]),
                               float(parts[ic])))
            except (ValueError, IndexError):
                raise RuntimeError(f"{path}:{lineno}: malformed row")
    return series


def _cmd_plot(args) -> int:
    out_dir = _output_dir(args.out_dir)
    if args.kind == "scatter":
        records = []
        for path in args.inputs:
            recs, _ = read_records(path)
            records.extend(recs)
        svg = scatter_svg(build_scatter(records))
        out = out_dir / "scatter.svg"
    elif args.kind == "profiles":
        trajectories = []
        for path in args.inputs:
            p = Path(path)
            test_id = p.stem
            kind = test_id.rsplit("-", 1)[0]
            trajectories.append((kind, test_id, _read_trajectory_csv(p)))
        profiles = velocity_profiles(trajectories, window=args.window)
        svg = profiles_svg(profiles, window=args.window)
        out = out_dir / "profiles.svg"
        csv_out = out_dir / "profiles.csv"
        csv_out.write_text("\n".join(profiles_csv_rows(profiles)) + "\n",
                           encoding="utf-8")
        print(csv_out)
    else:
        samples = load_calibration_csv(args.inputs[0])
        svg = calibration_svg(samples, fit_calibration(samples))
        out = out_dir / "calibration.svg"
    out.write_text(svg + "\n", encoding="utf-8")
    print(out)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="impactbench", description=__doc__)
    parser.add_argument(
        "--version", action="store_true",
        help="print tool version and default calibration, then exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("calibrate", help="fit a pressure calibration")
    p.add_argument("samples", help="CSV of pressure_psi,peak_velocity_mps")
    p.add_argument("--out-dir", default=None)

    p = sub.add_parser("run-test", help="run one impact test")
    p.add_argument("--controller", required=True,
                   choices=[k.value for k in ControllerKind])
    p.add_argument("--pressure", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--offset", type=float, default=0.0,
                   help="subject placement error in metres")
    p.add_argument("--out", default=None)

    p = sub.add_parser("run-campaign", help="run escalation campaigns")
    p.add_argument("--config", required=True, help="TOML campaign config")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel campaigns (one per controller)")
    p.add_argument("--out-dir", default=None)

    p = sub.add_parser("analyze", help="metrics from record files")
    p.add_argument("records", nargs="+")
    p.add_argument("--out-dir", default=None)

    p = sub.add_parser("plot", help="emit an SVG figure")
    p.add_argument("--kind", required=True,
                   choices=["scatter", "profiles", "calibration"])
    p.add_argument("inputs", nargs="+",
                   help="record files (scatter), trajectory CSVs (profiles) "
                        "or a calibration sample CSV")
    p.add_argument("--window", type=float, default=0.05)
    p.add_argument("--out-dir", default=None)
    return parser


_COMMANDS = {
    "calibrate": _cmd_calibrate,
    "run-test": _cmd_run_test,
    "run-campaign": _cmd_run_campaign,
    "analyze": _cmd_analyze,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.version:
            print(f"impactbench {__version__}")
            print(f"default calibration: slope {DEFAULT_CALIBRATION.slope} "
                  f"(m/s)/PSI, intercept {DEFAULT_CALIBRATION.intercept} m/s, "
                  f"range {DEFAULT_CALIBRATION.valid_pressure_range[0]:g}-"
                  f"{DEFAULT_CALIBRATION.valid_pressure_range[1]:g} PSI")
            return 0
        if not args.command:
            parser.error("a subcommand is required")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures map to exit code 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
