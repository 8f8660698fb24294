"""
PNG implementation of the scene dataset store.

Layout:
    images/view_%04d.png      8-bit RGB
    masks/view_%04d.png       8-bit gray, 255 = in
    generator_config.yaml     scene configuration snapshot
    poses.json                manifest with poses, intrinsics, box and checksum
    companion_without_box/    optional, same layout
"""
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Union

import imageio.v2 as imageio
import numpy as np
import yaml

from scene.camera import Camera, Intrinsics
from scene.geometry_core import OrientedBox
from storage.dataset_store import DatasetStore, SceneDataset
from utils.errors import DatasetError, GeometryError
from utils.logger import get_logger

logger = get_logger(__name__)

MANIFEST = "poses.json"
GENERATOR_CONFIG = "generator_config.yaml"
COMPANION_DIR = "companion_without_box"
FORMAT_VERSION = 1


def _checksum(root: Path, files: List[str]) -> str:
    digest = hashlib.sha256()
    for name in sorted(files):
        digest.update(name.encode("utf-8"))
        digest.update((root / name).read_bytes())
    return digest.hexdigest()


class PngDatasetStore(DatasetStore):
    """Scene datasets as PNG files plus a JSON manifest."""

    def exists(self, path: Union[str, Path]) -> bool:
        return (Path(path) / MANIFEST).is_file()

    def write(self, dataset: SceneDataset, path: Union[str, Path]) -> Path:
        root = Path(path)
        (root / "images").mkdir(parents=True, exist_ok=True)
        (root / "masks").mkdir(parents=True, exist_ok=True)

        files, views = [], []
        for i, camera in enumerate(dataset.cameras):
            image_name = f"images/view_{i:04d}.png"
            mask_name = f"masks/view_{i:04d}.png"
            imageio.imwrite(root / image_name, np.ascontiguousarray(dataset.images[i], dtype=np.uint8))
            imageio.imwrite(root / mask_name, np.where(dataset.masks[i], 255, 0).astype(np.uint8))
            files += [image_name, mask_name]
            views.append({
                "image": image_name,
                "mask": mask_name,
                "c2w": [float(v) for v in camera.c2w.reshape(-1)],
            })

        with open(root / GENERATOR_CONFIG, "w", encoding="utf-8") as f:
            yaml.safe_dump(dataset.generator_config, f, sort_keys=False)
        files.append(GENERATOR_CONFIG)

        companion = None
        if dataset.companion is not None:
            self.write(dataset.companion, root / COMPANION_DIR)
            companion = COMPANION_DIR

        manifest = {
            "format_version": FORMAT_VERSION,
            "num_views": dataset.num_views,
            "intrinsics": dataset.cameras[0].intrinsics.to_dict() if dataset.cameras else None,
            "box": dataset.box.to_dict(),
            "with_box": dataset.with_box,
            "ambient": [float(a) for a in dataset.ambient],
            "seed": int(dataset.seed),
            "object": dataset.object_spec,
            "views": views,
            "companion": companion,
            "checksum": _checksum(root, files),
        }
        with open(root / MANIFEST, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2)
        logger.info(f"Wrote {dataset.num_views} views to {root}")
        return root

    def read(self, path: Union[str, Path]) -> SceneDataset:
        root = Path(path)
        manifest = self._load_manifest(root)
        try:
            views = manifest["views"]
            intrinsics = Intrinsics.from_dict(manifest["intrinsics"])
            box = OrientedBox.from_dict(manifest["box"])
        except (KeyError, TypeError, GeometryError) as e:
            raise DatasetError(f"{root / MANIFEST}: malformed manifest ({e})") from e

        files = [v["image"] for v in views] + [v["mask"] for v in views] + [GENERATOR_CONFIG]
        for name in files:
            if not (root / name).is_file():
                raise DatasetError(f"Dataset file missing: {root / name}")
        if _checksum(root, files) != manifest.get("checksum"):
            raise DatasetError(f"{root / MANIFEST}: checksum mismatch, dataset was modified")

        images = np.stack([self._read_png(root / v["image"], rgb=True) for v in views])
        masks = np.stack([self._read_png(root / v["mask"], rgb=False) for v in views]) > 127
        cameras = [Camera(c2w=np.asarray(v["c2w"], dtype=np.float64).reshape(4, 4),
                          intrinsics=intrinsics) for v in views]
        if images.shape[1:3] != (intrinsics.height, intrinsics.width):
            raise DatasetError(
                f"{root}: images are {images.shape[1:3]}, intrinsics say "
                f"{(intrinsics.height, intrinsics.width)}")

        with open(root / GENERATOR_CONFIG, "r", encoding="utf-8") as f:
            generator_config = yaml.safe_load(f) or {}

        companion = None
        if manifest.get("companion"):
            companion = self.read(root / manifest["companion"])

        logger.info(f"Loaded {len(views)} views from {root}")
        return SceneDataset(
            cameras=cameras,
            images=images,
            masks=masks,
            box=box,
            ambient=tuple(manifest["ambient"]),
            seed=int(manifest["seed"]),
            with_box=bool(manifest["with_box"]),
            object_spec=manifest.get("object"),
            generator_config=generator_config,
            companion=companion,
            root=root,
        )

    @staticmethod
    def _load_manifest(root: Path) -> Dict[str, Any]:
        manifest_path = root / MANIFEST
        if not manifest_path.is_file():
            raise DatasetError(f"Dataset manifest missing: {manifest_path}")
        try:
            with open(manifest_path, "r", encoding="utf-8") as f:
                manifest = json.load(f)
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise DatasetError(f"{manifest_path}: unreadable manifest ({e})") from e
        if manifest.get("format_version") != FORMAT_VERSION:
            raise DatasetError(
                f"{manifest_path}: unsupported format version {manifest.get('format_version')}")
        return manifest

    @staticmethod
    def _read_png(path: Path, rgb: bool) -> np.ndarray:
        try:
            data = np.asarray(imageio.imread(path))
        except Exception as e:
            raise DatasetError(f"Corrupt image file: {path} ({e})") from e
        if data.dtype != np.uint8:
            raise DatasetError(f"{path}: expected 8-bit data, got {data.dtype}")
        if rgb and (data.ndim != 3 or data.shape[2] != 3):
            raise DatasetError(f"{path}: expected an RGB image, got shape {data.shape}")
        if not rgb and data.ndim != 2:
            raise DatasetError(f"{path}: expected a single-channel mask, got shape {data.shape}")
        return data
