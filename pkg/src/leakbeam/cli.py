"""Command-line entry point: ``leakbeam run | cdf | verify``."""

import argparse
import logging
import sys

from . import __version__
from .errors import LeakbeamError
from .harness import RECIPES, build_spec, parse_config_text, parse_value, run, write_output

# flag name -> configuration key
_FLAG_KEYS = {"scheme": "schemes", "snr_db": "snr_db", "trials": "trials", "seed": "seed",
              "format": "format", "recipe": "recipe", "workers": "workers"}


def _add_common(p, with_schemes=True):
    p.add_argument("--config", metavar="FILE",
                   help="flat key=value file, or an earlier output file to reproduce")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   help="override any configuration key (repeatable)")
    if with_schemes:
        p.add_argument("--scheme", metavar="LIST",
                       help="comma-separated schemes, e.g. zf-pa,malc-pa,ralc-pa")
        p.add_argument("--snr-db", metavar="GRID", help="SNR grid in dB, e.g. 0:5:30 or 10,20")
        p.add_argument("--trials", metavar="N", help="channel realizations per point")
        p.add_argument("--workers", metavar="N", help="worker processes for trials")
    p.add_argument("--seed", metavar="S", help="master seed")
    p.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), help="output format")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="leakbeam",
        description="Leakage-controlled MU-MISO beamforming simulations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Monte Carlo sweeps of weighted sum-rate or convergence")
    _add_common(p_run)
    p_run.add_argument("--recipe", choices=sorted(RECIPES),
                       help="figure recipe with preset schemes, grid and variants")

    p_cdf = sub.add_parser("cdf", help="analytical vs empirical leakage CDF grids")
    _add_common(p_cdf, with_schemes=False)
    p_cdf.add_argument("--recipe", choices=("fig2", "fig3"), default="fig3",
                       help="fig2 for P_D, fig3 for P_V (default)")

    p_ver = sub.add_parser("verify", help="run the acceptance checks and report pass/fail")
    p_ver.add_argument("--full", action="store_true",
                       help="use the full trial counts (slow); default is a quick pass")
    p_ver.add_argument("--only", metavar="LIST",
                       help="comma-separated criterion numbers, e.g. 1,3,4")
    p_ver.add_argument("--seed", type=int, default=0, help="master seed")
    p_ver.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def _collect(args):
    file_values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_values = parse_config_text(fh.read())
    flags = {}
    for item in args.set:
        if "=" not in item:
            raise LeakbeamError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        flags[key.strip()] = parse_value(key.strip(), value)
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            flags[key] = parse_value(key, str(value))
    return file_values, flags


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "verify":
            from .verify import run_checks
            only = None
            if args.only:
                only = [int(x) for x in args.only.split(",") if x.strip()]
            results = run_checks(full=args.full, only=only, seed=args.seed)
            return 0 if all(r.passed for r in results) else 1
        file_values, flags = _collect(args)
        spec = build_spec(file_values, flags, command=args.command, output_path=args.out)
        columns, rows = run(spec)
        write_output(spec, columns, rows)
        return 0
    except (LeakbeamError, OSError, ValueError) as exc:
        print(f"leakbeam: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
