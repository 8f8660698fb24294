"""
Base command class shared by every CLI subcommand.
"""
import argparse
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Optional

import torch

from settings.loader import ConfigLoader
from settings.schema import PipelineConfig
from storage.checkpoint_store import Checkpoint, load_checkpoint
from storage.dataset_store import SceneDataset, get_dataset_store
from utils.errors import DatasetError
from utils.logger import get_logger

logger = get_logger(__name__)


class BaseCommand(ABC):
    """Base class for all subcommands."""

    name: str = ""
    help: str = ""

    def __init__(self, loader: ConfigLoader, args: argparse.Namespace):
        """
        Initialize the command.

        Args:
            loader: Validated configuration
            args: Parsed command-line arguments
        """
        self.loader = loader
        self.config: PipelineConfig = loader.config
        self.args = args
        torch.set_num_threads(self.config.resolved_threads)
        logger.debug(f"{self.__class__.__name__} using {self.config.resolved_threads} threads")

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        """Register subcommand-specific arguments. Override as needed."""
        pass

    @abstractmethod
    def run(self) -> int:
        """Execute the command and return its exit code."""
        pass

    @property
    def output_dir(self) -> Path:
        return Path(self.config.output_dir)

    @property
    def dataset_dir(self) -> Path:
        return Path(self.config.dataset_dir)

    def snapshot(self, directory: Optional[Path] = None) -> Path:
        path = self.loader.snapshot(directory or self.output_dir)
        logger.info(f"Resolved configuration written to {path}")
        return path

    def load_dataset(self) -> SceneDataset:
        store = get_dataset_store()
        if not store.exists(self.dataset_dir):
            raise DatasetError(f"No dataset at {self.dataset_dir}; run forge first")
        return store.read(self.dataset_dir)

    def load_checkpoint(self) -> Checkpoint:
        checkpoint = load_checkpoint(self.args.checkpoint)
        checkpoint.fields.eval()
        return checkpoint
