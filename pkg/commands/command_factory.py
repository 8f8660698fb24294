"""
Command factory for the CLI subcommands.
Provides a centralized way to look up and create command instances.
"""
import argparse
from typing import Dict, Type

from commands.base_command import BaseCommand
from commands.eval_command import EvalCommand
from commands.extract_command import ExtractCommand
from commands.forge_command import ForgeCommand
from commands.render_command import RenderCommand
from commands.trace_debug_command import TraceDebugCommand
from commands.train_command import TrainCommand
from settings.loader import ConfigLoader
from utils.errors import ConfigError
from utils.logger import get_logger

logger = get_logger(__name__)


class CommandFactory:
    """Factory class for creating subcommands."""

    # Registry of available subcommands, in help order
    _command_types: Dict[str, Type[BaseCommand]] = {
        ForgeCommand.name: ForgeCommand,
        TrainCommand.name: TrainCommand,
        RenderCommand.name: RenderCommand,
        ExtractCommand.name: ExtractCommand,
        EvalCommand.name: EvalCommand,
        TraceDebugCommand.name: TraceDebugCommand,
    }

    @classmethod
    def create_command(cls, command_type: str, loader: ConfigLoader,
                       args: argparse.Namespace) -> BaseCommand:
        """
        Create a command of the specified type.

        Args:
            command_type: Subcommand name ('forge', 'train', ...)
            loader: Validated configuration
            args: Parsed command-line arguments

        Returns:
            An instance of the specified command

        Raises:
            ConfigError: If command_type is not registered
        """
        if command_type not in cls._command_types:
            available_types = list(cls._command_types.keys())
            raise ConfigError(f"Unsupported command: {command_type}. Available commands: {available_types}")

        command_class = cls._command_types[command_type]
        logger.debug(f"Creating {command_type} command")
        try:
            return command_class(loader, args)
        except Exception as e:
            logger.error(f"Failed to create {command_type} command: {e}")
            raise

    @classmethod
    def get_available_command_types(cls) -> list:
        """Get list of available subcommands."""
        return list(cls._command_types.keys())

    @classmethod
    def get_command_class(cls, command_type: str) -> Type[BaseCommand]:
        if command_type not in cls._command_types:
            raise ConfigError(f"Unsupported command: {command_type}")
        return cls._command_types[command_type]
