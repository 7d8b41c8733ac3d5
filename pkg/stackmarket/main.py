import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from stackmarket import __version__
from stackmarket.cli.commands import COMMANDS
from stackmarket.core.config import settings
from stackmarket.core.exceptions import StackMarketError
from stackmarket.models.central import TighteningConfig
from stackmarket.models.equilibrium import DynamicsConfig
from stackmarket.models.run import Command, RunConfig, SweepAxis

logger = logging.getLogger("stackmarket")


def _values(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--scenario", type=Path, help="Scenario JSON; generated from --seed when omitted")
    shared.add_argument("--out", type=Path, default=Path(settings.STACKMARKET_OUTPUT_DIR), help="Output directory")
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--users", type=int, default=10, help="Number of users")
    shared.add_argument("--msps", type=int, default=3, help="Number of MSPs")
    shared.add_argument("--capacity", type=float, help="Uniform MSP capacity (MHz)")
    shared.add_argument("--pmax", type=float, help="Price cap of every MSP")
    shared.add_argument("--mu", type=float, default=1e-2, help="Best-response learning rate")
    shared.add_argument("--dp", type=float, default=1e-4, help="Central-difference step")
    shared.add_argument("--tol", type=float, default=1e-4, help="Dynamics convergence tolerance")
    shared.add_argument("--beta", type=float, default=10.0, help="Partition shrink factor")
    shared.add_argument("--epsilon", type=float, default=1e-3, help="Partition resolution")
    shared.add_argument("--gap", type=float, help="Absolute LB/UB gap tolerance")
    shared.add_argument("--sweep-axis", choices=[a.value for a in SweepAxis])
    shared.add_argument("--sweep-values", type=_values, default=[], help="Comma-separated ascending values")
    shared.add_argument("--jobs", type=int, default=settings.STACKMARKET_JOBS, help="Concurrent sweep points")

    parser = argparse.ArgumentParser(prog="stackmarket", description="Stackelberg bandwidth pricing solver")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in Command:
        sub.add_parser(command.value, parents=[shared])
    return parser


def to_run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=args.command,
        scenario=args.scenario,
        out=args.out,
        seed=args.seed,
        users=args.users,
        msps=args.msps,
        capacity=args.capacity,
        pmax=args.pmax,
        dynamics=DynamicsConfig(step_dp=args.dp, learning_rate=args.mu, convergence_tol=args.tol),
        tightening=TighteningConfig(beta=args.beta, epsilon=args.epsilon, gap_tol=args.gap),
        sweep_axis=args.sweep_axis,
        sweep_values=args.sweep_values,
        jobs=args.jobs,
    )


def configure_logging() -> None:
    logging.basicConfig(
        level=settings.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[List[str]] = None) -> int:
    """Run one sub-command and return its exit code"""
    args = build_parser().parse_args(argv)
    configure_logging()
    try:
        config = to_run_config(args)
        written = COMMANDS[config.command.value](config)
    except ValidationError as e:
        logger.error(f"Invalid arguments: {e}")
        return 1
    except StackMarketError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    for path in written:
        logger.info(f"Wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
