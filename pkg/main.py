"""
Main entry point for the glassbox reconstruction pipeline.
"""
import logging.config
import sys

from log_config import LOGGING_CONFIG

logging.config.dictConfig(LOGGING_CONFIG)

from commands.cli import run  # noqa: E402


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
