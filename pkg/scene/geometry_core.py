"""
Vector and ray primitives plus exact ray / oriented-box intersection.

Vectors are float64 numpy arrays of shape (3,). Every function here is pure and
works on immutable inputs, so calls can be spread across threads freely.
"""
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np

from utils.errors import GeometryError
from utils.logger import get_logger

logger = get_logger(__name__)

Vec3 = np.ndarray

# Geometric tolerance in scene units
EPS_GEO = 1e-6
# Unit-norm tolerance for direction vectors
EPS_UNIT = 1e-9
# Below this a direction component counts as parallel to the slab
_PARALLEL = 1e-15


def vec3(x: float, y: float, z: float) -> Vec3:
    """Build a float64 3-vector."""
    return np.array([x, y, z], dtype=np.float64)


def as_vec3(value: Sequence[float]) -> Vec3:
    """Coerce any 3-sequence to a float64 vector, rejecting non-finite input."""
    v = np.asarray(value, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(v)):
        raise GeometryError(f"Vector has non-finite components: {v}")
    return v


def normalize(v: Sequence[float]) -> Vec3:
    """Return v / ‖v‖."""
    v = as_vec3(v)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise GeometryError("Cannot normalize a zero vector")
    return v / norm


def is_unit(v: Vec3, tol: float = EPS_UNIT) -> bool:
    return abs(float(np.linalg.norm(v)) - 1.0) <= tol


@dataclass(frozen=True)
class Ray:
    """Half-line origin + t·direction with a unit direction."""
    origin: Vec3
    direction: Vec3

    def __post_init__(self):
        object.__setattr__(self, "origin", as_vec3(self.origin))
        object.__setattr__(self, "direction", as_vec3(self.direction))
        if not is_unit(self.direction):
            raise GeometryError(
                f"Ray direction must be unit-norm, got norm {np.linalg.norm(self.direction):.12f}"
            )

    def at(self, t: float) -> Vec3:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class OrientedBox:
    """
    The transparent container: a rectangular box with known pose and refractive index.

    Attributes:
        center: Box center in world coordinates
        rotation: 3x3 local-to-world rotation (columns are the local axes)
        half_extents: Positive half sizes along the local axes
        ior: Refractive index of the box material
    """
    center: Vec3
    rotation: np.ndarray
    half_extents: Vec3
    ior: float = 1.45

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec3(self.center))
        rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "half_extents", as_vec3(self.half_extents))
        object.__setattr__(self, "ior", float(self.ior))

        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=EPS_UNIT, rtol=0.0):
            raise GeometryError("Box rotation must be orthonormal (R^T R = I)")
        if np.linalg.det(rotation) <= 0.0:
            raise GeometryError("Box rotation must be a proper rotation (det = +1)")
        if np.any(self.half_extents <= 0.0):
            raise GeometryError(f"Box half extents must be positive, got {self.half_extents}")
        if not 1.0 < self.ior < 3.0:
            raise GeometryError(f"Box refractive index must lie in (1, 3), got {self.ior}")

    @classmethod
    def axis_aligned(cls, half_extents: Sequence[float], center: Sequence[float] = (0.0, 0.0, 0.0),
                     ior: float = 1.45) -> "OrientedBox":
        return cls(center=center, rotation=np.eye(3), half_extents=half_extents, ior=ior)

    def to_local(self, point: Vec3) -> Vec3:
        return self.rotation.T @ (np.asarray(point, dtype=np.float64) - self.center)

    def to_world_direction(self, local_dir: Vec3) -> Vec3:
        return self.rotation @ local_dir

    def corners(self) -> np.ndarray:
        """The eight world-space corners, shape (8, 3)."""
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                         dtype=np.float64)
        return self.center + (signs * self.half_extents) @ self.rotation.T

    def world_bounds(self) -> np.ndarray:
        """Axis-aligned world bounds [[min xyz], [max xyz]]."""
        corners = self.corners()
        return np.stack([corners.min(axis=0), corners.max(axis=0)])

    def to_dict(self) -> Dict[str, Any]:
        """Manifest form: center (3), rotation (9, row-major), half_extents (3), ior."""
        return {
            "center": [float(c) for c in self.center],
            "rotation": [float(r) for r in self.rotation.reshape(-1)],
            "half_extents": [float(h) for h in self.half_extents],
            "ior": float(self.ior),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "OrientedBox":
        try:
            return cls(
                center=data["center"],
                rotation=np.asarray(data["rotation"], dtype=np.float64).reshape(3, 3),
                half_extents=data["half_extents"],
                ior=data["ior"],
            )
        except KeyError as e:
            raise GeometryError(f"Box description is missing field {e}") from e


@dataclass(frozen=True)
class HitInterval:
    """Parametric interval where a ray is inside a box, with outward normals."""
    t_enter: float
    t_exit: float
    normal_enter: Vec3
    normal_exit: Vec3


def intersect_ray_box(ray: Ray, box: OrientedBox) -> Optional[HitInterval]:
    """
    Slab-method intersection in the box's local frame.

    Args:
        ray: Ray with unit direction
        box: Oriented box

    Returns:
        The hit interval, or None when the line misses the box or the box lies
        entirely behind the origin (t_exit <= 0). t_enter is negative when the
        origin is inside the box.
    """
    origin = box.to_local(ray.origin)
    direction = box.rotation.T @ ray.direction
    h = box.half_extents

    t_lo, t_hi = -np.inf, np.inf
    axis_lo = axis_hi = -1
    sign_lo = sign_hi = 0.0

    for axis in range(3):
        d = direction[axis]
        o = origin[axis]
        if abs(d) < _PARALLEL:
            # Parallel to this slab: either always inside it or never
            if abs(o) > h[axis]:
                return None
            continue
        t1 = (-h[axis] - o) / d
        t2 = (h[axis] - o) / d
        if d > 0.0:
            near, far, near_sign, far_sign = t1, t2, -1.0, 1.0
        else:
            near, far, near_sign, far_sign = t2, t1, 1.0, -1.0
        # strict comparisons keep the lowest axis on ties
        if near > t_lo:
            t_lo, axis_lo, sign_lo = near, axis, near_sign
        if far < t_hi:
            t_hi, axis_hi, sign_hi = far, axis, far_sign

    if t_lo > t_hi or t_hi <= 0.0:
        return None

    local_enter = np.zeros(3)
    local_enter[axis_lo] = sign_lo
    local_exit = np.zeros(3)
    local_exit[axis_hi] = sign_hi
    return HitInterval(
        t_enter=float(t_lo),
        t_exit=float(t_hi),
        normal_enter=box.to_world_direction(local_enter),
        normal_exit=box.to_world_direction(local_exit),
    )


def surface_normal(box: OrientedBox, point: Vec3) -> Vec3:
    """
    Outward unit normal of the face containing point.

    Edge and corner points pick the face with the largest local-coordinate
    magnitude, then the lowest axis (x < y < z).

    Raises:
        GeometryError: If the point is farther than EPS_GEO from every face
    """
    local = box.to_local(as_vec3(point))
    h = box.half_extents

    if np.any(np.abs(local) > h + EPS_GEO):
        raise GeometryError(f"Point {point} is not on surface (outside the box)")

    best_axis = -1
    best_mag = -np.inf
    for axis in range(3):
        mag = abs(local[axis])
        if abs(mag - h[axis]) <= EPS_GEO and mag > best_mag:
            best_axis, best_mag = axis, mag

    if best_axis < 0:
        raise GeometryError(f"Point {point} is not on surface (inside the box)")

    local_normal = np.zeros(3)
    local_normal[best_axis] = 1.0 if local[best_axis] >= 0.0 else -1.0
    return box.to_world_direction(local_normal)


def contains(box: OrientedBox, point: Vec3) -> bool:
    """True iff point lies in the closed box; the boundary counts as inside."""
    local = box.to_local(point)
    return bool(np.all(np.abs(local) <= box.half_extents + EPS_GEO))


def rotation_from_axis_angle(axis: Sequence[float], angle: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    k = normalize(axis)
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)
