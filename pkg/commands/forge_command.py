"""
forge: render a synthetic dataset from the scene configuration.
"""
from commands.base_command import BaseCommand
from forge.scene_forge import forge_dataset
from storage.dataset_store import get_dataset_store
from utils.logger import get_logger

logger = get_logger(__name__)


class ForgeCommand(BaseCommand):
    """Generate images, masks and poses of an analytic scene."""

    name = "forge"
    help = "render a synthetic dataset"

    def run(self) -> int:
        dataset = forge_dataset(self.config.scene, self.config.trace)
        root = get_dataset_store().write(dataset, self.dataset_dir)
        self.snapshot(root)
        logger.info(f"Dataset ready at {root}")
        return 0
