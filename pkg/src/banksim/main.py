from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional

import structlog

import banksim
from banksim.commands import run_command

DEFAULT_CONFIG = os.path.join("config", "dtc_model.env")
PUBLISHED_HELP = "coefficients JSON (default: the published DTC set)"


def configure_logging(verbose: bool = False) -> None:
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.dev.ConsoleRenderer(colors=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.DEBUG if verbose else logging.INFO
        ),
        logger_factory=structlog.PrintLoggerFactory(sys.stderr),
        cache_logger_on_first_use=False,
    )


def _add_geometry(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        default=os.environ.get("BANKSIM_CONFIG", DEFAULT_CONFIG),
        help="vessel/canal geometry env file (default: %(default)s)",
    )
    parser.add_argument(
        "--current", type=float, default=0.0, help="ambient current added to u, m/s"
    )


def _add_split(
    parser: argparse.ArgumentParser, seed_default: Optional[int] = 0
) -> None:
    parser.add_argument("--split-seed", type=int, default=seed_default)
    parser.add_argument(
        "--fraction", type=float, default=0.8, help="training share of the records"
    )
    parser.add_argument(
        "--stratify", action="store_true", help="split within each test label"
    )


def _add_sim(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--coeffs", help=PUBLISHED_HELP)
    parser.add_argument("--psi0", type=float, default=0.0)
    parser.add_argument("--u0", type=float, default=1.0)
    parser.add_argument("--dt", type=float, default=0.01)
    parser.add_argument("--t-max", type=float, default=120.0)
    parser.add_argument(
        "--x-in", type=float, default=12.6, help="constant surge force, N"
    )
    parser.add_argument("--surge-mass", type=float, default=None)
    parser.add_argument("--clearance-floor", type=float, default=None)
    parser.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="banksim", description="Bank effect identification and canal simulation"
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=banksim.__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    datagen = sub.add_parser(
        "datagen", help="synthesize a captive test from known coefficients"
    )
    _add_geometry(datagen)
    datagen.add_argument(
        "--scenario", choices=("harmonic_yaw", "harmonic_sway"), required=True
    )
    datagen.add_argument("--amplitude", type=float, required=True)
    datagen.add_argument("--period", type=float, required=True)
    datagen.add_argument("--y-offset", type=float, default=0.0)
    datagen.add_argument("--u0", type=float, default=1.0)
    datagen.add_argument("--duration", type=float, default=60.0)
    datagen.add_argument("--dt", type=float, default=0.1)
    datagen.add_argument(
        "--noise",
        type=float,
        default=0.0,
        help="noise std as a fraction of channel RMS",
    )
    datagen.add_argument("--seed", type=int, default=None)
    datagen.add_argument("--label", default="A")
    datagen.add_argument("--truth", help=PUBLISHED_HELP)
    datagen.add_argument("--out", required=True)

    ident = sub.add_parser("identify", help="fit the banking model to captive data")
    _add_geometry(ident)
    _add_split(ident)
    ident.add_argument("--data", nargs="+", required=True)
    ident.add_argument(
        "--truth", help="report the relative error against these coefficients"
    )
    ident.add_argument(
        "--predictions", help="write measured and fitted forces per record to this CSV"
    )
    ident.add_argument("--out", required=True)

    shap = sub.add_parser(
        "shapley", help="exact Shapley values of the regressor columns"
    )
    _add_geometry(shap)
    _add_split(shap, seed_default=None)
    shap.add_argument("--data", nargs="+", required=True)
    shap.add_argument(
        "--coeffs", help="reuse the split recorded in this coefficients JSON"
    )
    shap.add_argument("--block", choices=("X", "Y", "N", "all"), default="all")
    shap.add_argument("--jobs", type=int, default=1)
    shap.add_argument("--out")

    simulate = sub.add_parser("simulate", help="run one canal transit")
    _add_geometry(simulate)
    _add_sim(simulate)
    simulate.add_argument("--y0", type=float, required=True)

    sweep = sub.add_parser("sweep", help="grounding distance over initial offsets")
    _add_geometry(sweep)
    _add_sim(sweep)
    group = sweep.add_mutually_exclusive_group(required=True)
    group.add_argument("--y0-range", help="start:stop:step of initial offsets, m")
    group.add_argument(
        "--ys0-range", help="start:stop:step of initial starboard clearances, m"
    )
    sweep.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    configure_logging(args.verbose)
    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
