"""Command-line front end: ``nvgrad <subcommand> --config <path> [options]``."""

import argparse
import logging
from pathlib import Path
from typing import List, Optional, Sequence

from app_utils.config_manager import get_config_manager
from app_utils.errors import ConfigError, NumericError, ValidationError
from app_utils.log_helper import setup_logging
from app_utils.threading_helper import set_thread_cap
from command_interface.commands import COMMANDS, run_command
from command_interface.run_config import RunConfig, load_run_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_HELP = {
    "field": "stray-field maps of the configured sample",
    "scan": "gradiometry image of the configured sample",
    "psf": "delta-line point spread function and its widths",
    "resolution-map": "resolution over NV-sample distance and oscillation amplitude",
    "calibrate-amplitude": "oscillation amplitude from a profile scan and photon trace",
    "delay-sweep": "synthetic delay sweep with sine and cosine refits",
    "repro": "run the desk-scale acceptance checks and write report.txt",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nvgrad",
                                     description="NV-center electric-field gradiometry simulator")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name in COMMANDS:
        sub = subparsers.add_parser(name, help=_HELP[name])
        sub.add_argument("--config", type=Path, required=name != "repro",
                         help="run configuration JSON document")
        sub.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
        sub.add_argument("--seed", type=int, help="random seed (overrides seed)")
        sub.add_argument("--format", action="append", dest="formats",
                         choices=get_config_manager().get_available_formats(),
                         help="output format; repeat for several (overrides output.formats)")
        sub.add_argument("--log-level", default=None,
                         help="DEBUG, INFO, WARNING or ERROR (default from NVGRAD_LOG_LEVEL)")
        sub.add_argument("--threads", type=int, help="worker thread cap (overrides NVGRAD_THREADS)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Run configuration with the command-line overrides applied"""
    if args.config is not None:
        config = load_run_config(args.config)
    else:
        config = RunConfig.from_document({})
    if args.seed is not None and args.seed < 0:
        raise ConfigError(f"--seed must be non-negative, got {args.seed}")
    if args.seed is None and args.out is None and args.formats is None:
        return config
    return config.with_overrides(args.seed, args.out, args.formats)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one subcommand and map the outcome to an exit code"""
    args = build_parser().parse_args(argv)
    try:
        setup_logging(args.log_level)
    except ValueError as e:
        logger.error("%s", e)
        return EXIT_CONFIG

    try:
        if args.threads is not None:
            set_thread_cap(args.threads)
        config = resolve_config(args)
        written: List[Path] = run_command(args.command, config)
    except (ConfigError, ValidationError) as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG
    except NumericError as e:
        logger.error("Numeric failure: %s", e)
        return EXIT_NUMERIC
    except OSError as e:
        logger.error("I/O error: %s", e)
        return EXIT_IO
    except ValueError as e:
        logger.error("Invalid input: %s", e)
        return EXIT_CONFIG
    except Exception:
        logger.exception("Unexpected failure in '%s'", args.command)
        return EXIT_UNEXPECTED

    logger.info("%s finished: %d file(s) written", args.command, len(written))
    return EXIT_OK
