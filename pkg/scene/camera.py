"""
Pinhole camera with an OpenGL-style pose: right-handed, looking down its local -z,
image rows growing downwards.
"""
from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from scene.geometry_core import Ray, Vec3, as_vec3, normalize
from utils.errors import GeometryError


@dataclass(frozen=True)
class Intrinsics:
    """Square-pixel pinhole intrinsics in pixels."""
    focal: float
    cx: float
    cy: float
    width: int
    height: int

    def to_dict(self) -> Dict[str, Any]:
        return {"focal": float(self.focal), "cx": float(self.cx), "cy": float(self.cy),
                "width": int(self.width), "height": int(self.height)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Intrinsics":
        return cls(focal=float(data["focal"]), cx=float(data["cx"]), cy=float(data["cy"]),
                   width=int(data["width"]), height=int(data["height"]))


@dataclass(frozen=True)
class Camera:
    """
    Calibrated camera.

    Attributes:
        c2w: 4x4 camera-to-world matrix
        intrinsics: Pinhole intrinsics
    """
    c2w: np.ndarray
    intrinsics: Intrinsics

    def __post_init__(self):
        c2w = np.asarray(self.c2w, dtype=np.float64).reshape(4, 4)
        object.__setattr__(self, "c2w", c2w)

    @property
    def position(self) -> Vec3:
        return self.c2w[:3, 3].copy()

    @classmethod
    def look_at(cls, position: Sequence[float], intrinsics: Intrinsics,
                target: Sequence[float] = (0.0, 0.0, 0.0),
                up: Sequence[float] = (0.0, 0.0, 1.0)) -> "Camera":
        """
        Build a camera at position looking at target.

        Raises:
            GeometryError: If the viewing direction is parallel to up
        """
        position = as_vec3(position)
        backward = normalize(position - as_vec3(target))
        right = np.cross(as_vec3(up), backward)
        if np.linalg.norm(right) < 1e-9:
            raise GeometryError(f"Camera at {position} looks along the up vector")
        right = right / np.linalg.norm(right)
        true_up = np.cross(backward, right)

        c2w = np.eye(4)
        c2w[:3, 0] = right
        c2w[:3, 1] = true_up
        c2w[:3, 2] = backward
        c2w[:3, 3] = position
        return cls(c2w=c2w, intrinsics=intrinsics)

    def pixel_directions(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """World-space unit directions through pixel centers, shape (N, 3)."""
        k = self.intrinsics
        rows = np.asarray(rows, dtype=np.float64)
        cols = np.asarray(cols, dtype=np.float64)
        local = np.stack([
            (cols + 0.5 - k.cx) / k.focal,
            -(rows + 0.5 - k.cy) / k.focal,
            -np.ones_like(rows),
        ], axis=-1)
        world = local @ self.c2w[:3, :3].T
        return world / np.linalg.norm(world, axis=-1, keepdims=True)

    def ray_through_pixel(self, row: int, col: int) -> Ray:
        """The camera ray through the center of pixel (row, col)."""
        k = self.intrinsics
        if not (0 <= row < k.height and 0 <= col < k.width):
            raise GeometryError(f"Pixel ({row}, {col}) outside a {k.height}x{k.width} image")
        direction = self.pixel_directions(np.array([row]), np.array([col]))[0]
        return Ray(origin=self.position, direction=direction)

    def pixel_grid(self) -> Tuple[np.ndarray, np.ndarray]:
        """Row and column indices of every pixel in row-major order."""
        k = self.intrinsics
        rows, cols = np.meshgrid(np.arange(k.height), np.arange(k.width), indexing="ij")
        return rows.reshape(-1), cols.reshape(-1)
