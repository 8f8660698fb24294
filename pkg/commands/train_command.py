"""
train: optimize the fields against a forged dataset.
"""
import argparse

from commands.base_command import BaseCommand
from storage.checkpoint_store import load_checkpoint
from training.trainer import Trainer
from utils.logger import get_logger

logger = get_logger(__name__)


class TrainCommand(BaseCommand):
    """Run (or resume) the training loop."""

    name = "train"
    help = "train the neural fields"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--resume", default=None, help="checkpoint to continue from")

    def run(self) -> int:
        dataset = self.load_dataset()
        self.snapshot()
        trainer = Trainer(self.config.train, self.config.trace, self.config.field, dataset,
                          self.output_dir, resolved_config=self.loader.as_dict())
        if self.args.resume:
            trainer.restore(load_checkpoint(self.args.resume))
        final = trainer.train_loop()
        logger.info(f"Training finished, final checkpoint {final}")
        return 0
