"""
Command-line front end: argument parsing, config resolution and exit codes.

Exit codes: 0 on success, 2 for configuration errors, 3 for runtime failures
(I/O, corrupt datasets, non-finite training, empty meshes).
"""
import argparse
import json
from typing import List, Optional, Sequence

from commands.command_factory import CommandFactory
from settings.loader import ConfigLoader
from utils.errors import ConfigError, GlassboxError
from utils.logger import get_logger, set_level

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class _ArgumentParser(argparse.ArgumentParser):
    """argparse that raises ConfigError instead of exiting."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="YAML configuration file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted override, e.g. train.iterations=500 (repeatable)")
    common.add_argument("--output-dir", default=None,
                        help="output directory (the dataset directory for forge)")
    common.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])

    parser = _ArgumentParser(prog="glassbox",
                             description="Reconstruct an opaque object seen through a transparent box.")
    subparsers = parser.add_subparsers(dest="command", parser_class=_ArgumentParser)
    subparsers.required = True
    for name in CommandFactory.get_available_command_types():
        command_class = CommandFactory.get_command_class(name)
        sub = subparsers.add_parser(name, parents=[common], help=command_class.help)
        command_class.add_arguments(sub)
    return parser


def resolve_overrides(args: argparse.Namespace) -> List[str]:
    """--set overrides, plus --output-dir mapped onto the directory the command writes."""
    overrides = list(args.overrides)
    if args.output_dir is not None:
        key = "dataset_dir" if args.command == "forge" else "output_dir"
        overrides.append(f"{key}={json.dumps(args.output_dir)}")
    return overrides


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run the subcommand and map failures to exit codes."""
    try:
        args = build_parser().parse_args(argv)
        set_level(args.log_level)
        loader = ConfigLoader(args.config, resolve_overrides(args))
        command = CommandFactory.create_command(args.command, loader, args)
        return command.run()
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (GlassboxError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME
