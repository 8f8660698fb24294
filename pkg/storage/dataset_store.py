"""
Scene dataset storage interface module.
Provides the in-memory dataset type and the abstract interface for dataset storage.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from scene.camera import Camera
from scene.geometry_core import OrientedBox
from utils.errors import DatasetError
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class SceneDataset:
    """
    Multi-view images of one scene with poses, masks and the box description.

    Attributes:
        cameras: One calibrated camera per view
        images: (N, H, W, 3) uint8 intensities
        masks: (N, H, W) bool, True where the camera ray meets the box
        box: The glass container
        ambient: Linear ambient radiance
        seed: Generator seed
        with_box: Whether the views were rendered through the box
        object_spec: Ground-truth object description, None for an empty box
        generator_config: Scene configuration the views were rendered from
        companion: The same poses rendered without the box, when generated
    """
    cameras: List[Camera]
    images: np.ndarray
    masks: np.ndarray
    box: OrientedBox
    ambient: Tuple[float, float, float]
    seed: int
    with_box: bool
    object_spec: Optional[Dict[str, Any]]
    generator_config: Dict[str, Any]
    companion: Optional["SceneDataset"] = None
    root: Optional[Path] = None

    def __post_init__(self):
        if len(self.cameras) != len(self.images) or len(self.images) != len(self.masks):
            raise DatasetError(
                f"Inconsistent counts: {len(self.cameras)} cameras, {len(self.images)} images, "
                f"{len(self.masks)} masks")
        if self.images.shape[:3] != self.masks.shape:
            raise DatasetError(
                f"Mask shape {self.masks.shape} does not match images {self.images.shape[:3]}")

    @property
    def num_views(self) -> int:
        return len(self.cameras)

    def intensities(self, view: int) -> np.ndarray:
        """(H, W, 3) float64 intensities in [0, 1]."""
        return self.images[view].astype(np.float64) / 255.0

    def masked_pixels(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(view, row, col) of every supervised pixel, in view-major row-major order."""
        return np.nonzero(self.masks)


class DatasetStore(ABC):
    """Abstract interface for scene dataset storage."""

    @abstractmethod
    def write(self, dataset: SceneDataset, path: Union[str, Path]) -> Path:
        """Persist a dataset (and its companion) under path."""
        pass

    @abstractmethod
    def read(self, path: Union[str, Path]) -> SceneDataset:
        """Load and validate a dataset."""
        pass

    @abstractmethod
    def exists(self, path: Union[str, Path]) -> bool:
        """Whether a dataset manifest exists under path."""
        pass


def get_dataset_store() -> DatasetStore:
    """Factory function to get the dataset store instance."""
    from storage.png_dataset_store import PngDatasetStore
    return PngDatasetStore()
