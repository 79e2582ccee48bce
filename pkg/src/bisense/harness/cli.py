"""Bistatic OFDM localization: Monte Carlo sweeps, single trials and PEB tables.

    bisense sweep --config <path|desk|full> --out results.csv
    bisense trial --config <path> --seed 3 --json
    bisense peb --config <path>
    bisense demo-ambiguity --config <path>

Exit status: 0 on success, 2 on configuration errors, 1 on runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from ..core import ConfigurationError
from .config import load_config
from .sweep import (ambiguity_demo, position_bound, run_sweep, run_trial, write_csv)

log = logging.getLogger("bisense")


def _json_default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    return str(obj)


def _clean(obj):
    # JSON has no NaN/inf
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    return obj


def cmd_sweep(args) -> int:
    run = load_config(args.config)
    spec = run.sweep
    if args.trials is not None:
        spec = type(spec)(**{**spec.__dict__, "trials": args.trials})
    out = args.out or spec.out
    if spec.mode == "ambiguity_demo":
        report = ambiguity_demo(run.system, run.scene, run.target, spec.axis[0], spec.seed,
                                spec.trials, oversample=spec.oversample)
        text = json.dumps(_clean(report), indent=2, default=_json_default)
        if out:
            with open(out, "w") as fh:
                fh.write(text + "\n")
        else:
            print(text)
        return 0
    if not out:
        raise ConfigurationError("no output path: pass --out or set [sweep] out")
    points = run_sweep(spec, run.system, run.scene, run.target, n_jobs=args.jobs)
    write_csv(points, run.system, out)
    log.info("wrote %d sweep points to %s", len(points), out)
    return 0


def cmd_trial(args) -> int:
    run = load_config(args.config)
    spec = run.sweep
    if spec.mode == "snr_sweep":
        snr = spec.axis[0] if args.snr is None else args.snr
    else:
        snr = args.snr
    rec = run_trial(run.system, run.scene, run.target, snr, args.seed, args.trial,
                    oversample=spec.oversample, refine=spec.refine,
                    estimate_doppler=spec.estimate_doppler)
    if args.json:
        print(json.dumps(_clean(rec.to_dict()), indent=2, default=_json_default))
    else:
        print(f"position error {rec.position_error:.6g} m, range error {rec.range_error:.6g} m, "
              f"aoa error {rec.aoa_error:.6g} rad")
    return 0 if rec.error is None else 1


def cmd_peb(args) -> int:
    run = load_config(args.config)
    axis = run.sweep.axis if run.sweep.mode == "snr_sweep" else tuple(range(-40, 21, 5))
    print(f"{'snr_db':>8} {'peb_fine_m':>14} {'peb_coarse_m':>14}")
    for snr in axis:
        fine = position_bound(run.system, run.scene, run.target, snr, "fine")
        coarse = position_bound(run.system, run.scene, run.target, snr, "coarse")
        print(f"{snr:8.2f} {fine:14.6e} {coarse:14.6e}")
    return 0


def cmd_demo(args) -> int:
    run = load_config(args.config)
    snr = 0.0 if args.snr is None else args.snr
    report = ambiguity_demo(run.system, run.scene, run.target, snr, run.sweep.seed, args.trials,
                            oversample=run.sweep.oversample)
    print(json.dumps(_clean(report), indent=2, default=_json_default))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bisense", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="Monte Carlo RMSE/PEB sweep to CSV")
    p.add_argument("--config", required=True, help="INI file or built-in profile (desk, full)")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--trials", type=int, help="override trials per point")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("trial", help="single two-stage trial")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trial", type=int, default=0, help="trial index within the seed")
    p.add_argument("--snr", type=float, help="SNR in dB (default: first sweep axis value, "
                                             "or the physical link budget for RCS modes)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_trial)

    p = sub.add_parser("peb", help="print PEB versus SNR")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_peb)

    p = sub.add_parser("demo-ambiguity", help="fine-only versus two-stage estimation")
    p.add_argument("--config", required=True)
    p.add_argument("--snr", type=float, help="SNR in dB (default 0)")
    p.add_argument("--trials", type=int, default=1)
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
