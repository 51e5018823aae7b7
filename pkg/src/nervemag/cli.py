"""Command-line entry point.

Failures exit nonzero and print one ``error category=<c> message=<m>``
line to stderr; categories are config, io, fit, calibration and internal.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import dsp, io
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import (ExperimentError, analyze_record, load_calibration, run_calibration,
                          run_continuous_experiment, run_limits, run_pulsed_experiment)

EXIT_CODES = {"config": 2, "io": 3, "fit": 4, "calibration": 5, "internal": 1}


def _parser():
    p = argparse.ArgumentParser(prog="nervemag", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, mode=False):
        sp.add_argument("--config", type=Path, help="INI experiment file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--avg", type=int, help="number of averaged shots")
        sp.add_argument("--out", type=Path, help="output directory")
        if mode:
            sp.add_argument("--mode", choices=("pulsed", "continuous"))
        return sp

    sp = common(sub.add_parser("simulate-pulsed", help="pulsed-mode run"))
    sp.add_argument("--scenario", choices=("nerve", "calibration", "null"))
    sp = common(sub.add_parser("simulate-continuous", help="continuous-mode run"))
    sp.add_argument("--scenario", choices=("nerve", "calibration", "null"))
    common(sub.add_parser("calibrate", help="calibration step only"), mode=True)
    common(sub.add_parser("limits", help="projection-noise limits"))
    sp = common(sub.add_parser("analyze", help="analyse a stored record"), mode=True)
    sp.add_argument("record", type=Path, help="record CSV")
    sp.add_argument("calibration", type=Path, help="calibration key-value file")
    sp.add_argument("--axis", choices=("y", "z"), default="z")
    return p


def _config(args, mode=None):
    config = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    mode = mode or getattr(args, "mode", None)
    if mode:
        changes["mode"] = mode
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.avg is not None:
        changes["n_avg"] = args.avg
    if getattr(args, "scenario", None):
        changes["scenario"] = args.scenario
    if args.out is not None:
        changes["out_dir"] = str(args.out)
    try:
        return config.with_run(**changes) if changes else config
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _analyze(args):
    config = _config(args)
    record = io.read_record_csv(args.record)
    scale = load_calibration(args.calibration)
    report = analyze_record(record, scale, config, axis=args.axis)
    out = Path(config.run.out_dir)
    field = report.diagnostics.pop("field", None)
    if field is not None:
        report.files.append(str(io.write_waveform_csv(out / "analyzed_field.csv", field)))
    report.files.append(str(out / "analyze_report.txt"))
    io.write_kv(out / "analyze_report.txt", dict(report.as_kv(), record=str(args.record),
                                                calibration=str(args.calibration)))
    return report


def run_command(args):
    if args.command == "simulate-pulsed":
        return run_pulsed_experiment(_config(args, "pulsed"))
    if args.command == "simulate-continuous":
        return run_continuous_experiment(_config(args, "continuous"))
    if args.command == "calibrate":
        return run_calibration(_config(args))
    if args.command == "limits":
        return run_limits(_config(args))
    return _analyze(args)


def categorize(exc):
    if isinstance(exc, ExperimentError):
        return "fit"
    if isinstance(exc, (dsp.CalibrationError, dsp.DeconvolutionError)):
        return "calibration"
    if isinstance(exc, (OSError, io.FormatError)):
        return "io"
    if isinstance(exc, ValueError):
        return "config"
    return "internal"


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        report = run_command(args)
    except Exception as exc:  # noqa: BLE001 - every failure maps to an exit category
        cat = categorize(exc)
        msg = " ".join(str(exc).split())
        print(f"error category={cat} message={msg}", file=sys.stderr)
        return EXIT_CODES[cat]
    print(report.summary())
    for f in report.files:
        print(f"wrote {f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
