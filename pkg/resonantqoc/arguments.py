import argparse
import logging
import os

from . import const
from .errors import ConfigError

logger = logging.getLogger(__name__)

SUBCOMMANDS = [
    "simulate",
    "eliminate-drift",
    "resonate",
    "check",
    "solve",
    "classify",
    "demo-counterexample",
    "verify",
]


def _common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument(
        "--epsilon", type=float, default=const.DEFAULT_EPSILON,
        help="Moduli at or below this count as zero when building intervals, Bad sets and index partitions."
    )
    parser.add_argument(
        "--tol", type=float, default=const.DEFAULT_TOL,
        help="Tolerance of the resonance checks and of the moduli drift allowed by the resonance transform."
    )
    parser.add_argument(
        "--seed", type=int, default=0, help="Seed of every random draw (solver restarts, verify instances)."
    )
    parser.add_argument(
        "--out", type=str, default="outputs", help="Directory where the command writes its files."
    )
    parser.add_argument(
        "--log-level", type=str, default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level of the run."
    )
    parser.add_argument(
        "--quiet", action="store_true", help="If set, progress bars and console tables are not shown."
    )
    return parser


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="run_qoc_cli.py",
        description="Optimal control of n-level quantum systems: drift elimination, resonance analysis and "
                    "reduced optimal control on the real sphere."
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    simulate = subparsers.add_parser("simulate", parents=[common], help="Propagate a control from an initial state.")
    simulate.add_argument("--system", type=str, required=True, help="System JSON file.")
    simulate.add_argument("--control", type=str, required=True, help="Control JSON file (flavor V, H or U).")
    simulate.add_argument("--psi0", type=str, default="e1",
                          help="Initial state: e<k> for eigenstate k (1-based) or a JSON list.")

    eliminate = subparsers.add_parser("eliminate-drift", parents=[common],
                                      help="Pass a hermitian-V control to the interaction frame.")
    eliminate.add_argument("--system", type=str, required=True, help="System JSON file.")
    eliminate.add_argument("--control", type=str, required=True, help="Hermitian-V control JSON file.")
    eliminate.add_argument("--refine", type=int, default=1, help="Sub-steps per step for the drift phase.")

    resonate = subparsers.add_parser("resonate", parents=[common],
                                     help="Build the resonant representative of a pair and compare costs.")
    resonate.add_argument("--system", type=str, required=True, help="System JSON file.")
    resonate.add_argument("--control", type=str, required=True, help="Control JSON file.")
    resonate.add_argument("--psi0", type=str, default="e1", help="Initial state: e<k> or a JSON list.")

    check = subparsers.add_parser("check", parents=[common], help="Validate a system and test controllability.")
    check.add_argument("--system", type=str, required=True, help="System JSON file.")

    solve = subparsers.add_parser("solve", parents=[common], help="Solve a reduced optimal control problem.")
    solve.add_argument("--system", type=str, required=True, help="System JSON file.")
    solve.add_argument("--cost", type=str, required=True, help="Cost JSON file.")
    solve.add_argument("--request", type=str, required=True, help="Solve request JSON file (source, target, T, N).")
    solve.add_argument("--restarts", type=int, default=None, help="Overrides the request's restart count.")

    classify = subparsers.add_parser("classify", parents=[common],
                                     help="Classify a real pair on its clean windows.")
    classify.add_argument("--system", type=str, required=True, help="System JSON file.")
    classify.add_argument("--control", type=str, required=True, help="Real-U control JSON file.")
    classify.add_argument("--psi0", type=str, default="e1", help="Real initial state: e<k> or a JSON list.")
    classify.add_argument("--cost", type=str, required=True, help="Cost JSON file.")

    subparsers.add_parser("demo-counterexample", parents=[common],
                          help="Export the two ladder controls that share a path.")

    verify = subparsers.add_parser("verify", parents=[common], help="Run the property suites.")
    verify.add_argument("--filter", type=str, default=None,
                        help="Comma-separated criterion ids or groups (system, dynamics, resonance, optimizer, "
                             "extremals).")
    verify.add_argument("--fixtures", type=str, default=None, help="Directory of fixture JSON files.")
    verify.add_argument("--scale", type=float, default=1.0, help="Multiplier of the instance counts.")
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    args = build_parser().parse_args(argv)

    # Sanity checks for the arguments
    if not args.epsilon > 0:
        raise ConfigError(f"--epsilon must be positive, got {args.epsilon}")
    if not args.tol > 0:
        raise ConfigError(f"--tol must be positive, got {args.tol}")
    if getattr(args, "refine", 1) < 1:
        raise ConfigError(f"--refine must be at least 1, got {args.refine}")

    os.makedirs(args.out, exist_ok=True)
    if not os.access(args.out, os.W_OK):
        raise ConfigError(f"Output directory is not writable: {args.out}")
    return args
