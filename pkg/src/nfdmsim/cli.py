"""Command line interface: run / sweep / selftest.

Exit codes: 0 success, 1 configuration error, 2 runtime or numerical error.
"""

from __future__ import annotations

import argparse
import sys

from .config import dump_default_config, load_config
from .harness import power_sweep, run_montecarlo, write_csv
from .selftest import run_selftest
from .signals import SignalError


def _add_common(p):
    p.add_argument("--config", help="YAML config file (defaults built in)")
    p.add_argument("--out", default="results.csv", help="output CSV path")
    p.add_argument("--bursts", type=int, help="bursts per power point")
    p.add_argument("--seed", type=int, help="experiment seed")
    p.add_argument("--step-km", type=float, help="split-step size")
    p.add_argument("--length-km", type=float, help="fiber length")
    p.add_argument("--n-info", type=int, help="information symbols per burst")
    p.add_argument("--no-noise", action="store_true",
                   help="disable amplification noise")
    p.add_argument("--detectors", help="comma list among fnft,ifnft,dffnft,dfbnft")
    p.add_argument("--quiet", action="store_true")


def _overrides(args) -> dict:
    over = {"fiber": {}, "system": {}, "run": {}}
    if args.bursts is not None:
        over["run"]["n_bursts"] = args.bursts
    if args.seed is not None:
        over["run"]["seed"] = args.seed
    if args.step_km is not None:
        over["run"]["step_km"] = args.step_km
    if args.length_km is not None:
        over["fiber"]["length_km"] = args.length_km
    if args.n_info is not None:
        over["system"]["n_info"] = args.n_info
    if args.no_noise:
        over["run"]["noise_on"] = False
    if args.detectors:
        over["run"]["detectors"] = args.detectors.split(",")
    return over


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nfdmsim",
        description="NFDM transmission laboratory: Monte Carlo BER for four "
                    "detection strategies")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single power point")
    _add_common(p_run)
    p_run.add_argument("--power", type=float, help="launch power in dBm")

    p_sweep = sub.add_parser("sweep", help="power grid sweep")
    _add_common(p_sweep)
    p_sweep.add_argument("--powers", help="comma list of dBm values")

    p_self = sub.add_parser("selftest", help="run the oracle/property suite")

    sub.add_parser("print-config", help="print the default configuration")

    args = parser.parse_args(argv)

    if args.command == "selftest":
        ok = run_selftest()
        return 0 if ok else 2
    if args.command == "print-config":
        print(dump_default_config(), end="")
        return 0

    try:
        over = _overrides(args)
        if args.command == "run" and args.power is not None:
            over["run"]["powers_dbm"] = [args.power]
        if args.command == "sweep" and args.powers:
            over["run"]["powers_dbm"] = [float(x) for x in args.powers.split(",")]
        rc = load_config(args.config, over)
    except (SignalError, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1

    log = (lambda *_: None) if args.quiet else (
        lambda msg: print(msg, file=sys.stderr))
    try:
        if args.command == "run":
            if len(rc.powers_dbm) != 1:
                print("run expects exactly one power (use --power)",
                      file=sys.stderr)
                return 1
            records = run_montecarlo(rc.system, rc.fiber, rc.detectors,
                                     rc.powers_dbm[0], rc.n_bursts, rc.seed,
                                     rc.step_km, rc.noise_on, log)
            write_csv(records, args.out)
            for r in records:
                print(f"{r.detector:7s} P={r.power_dbm:+.2f} dBm  "
                      f"BER={r.ber:.3e}  Q2={r.q2_db:+.2f} dB  "
                      f"({r.bits} bits, {r.failed_bursts} failed bursts)")
        else:
            records, summaries = power_sweep(rc.system, rc.fiber, rc.detectors,
                                             rc.powers_dbm, rc.n_bursts,
                                             rc.seed, rc.step_km, rc.noise_on,
                                             log)
            write_csv(records, args.out)
            print("optimum per detector:")
            for s in summaries:
                print(f"  {s.detector:7s} P*={s.best_power_dbm:+.2f} dBm  "
                      f"Q2*={s.best_q2_db:+.2f} dB")
        print(f"wrote {args.out}")
    except (SignalError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":        # pragma: no cover
    sys.exit(main())
