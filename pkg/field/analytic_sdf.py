"""
Exact analytic SDFs used as ground-truth objects and test oracles.

Each primitive evaluates on torch tensors so the neural-field helpers (sdf_eval,
sdf_and_gradient) work on it unchanged.
"""
from abc import ABC, abstractmethod
from typing import Any, Dict, Optional, Sequence

import numpy as np
import torch

from scene.geometry_core import OrientedBox, as_vec3, normalize
from utils.errors import GeometryError


class AnalyticSdf(ABC):
    """Base class for analytic primitives with an optional Lambertian albedo."""

    tag: str = ""

    def __init__(self, center: Sequence[float] = (0.0, 0.0, 0.0),
                 albedo: Optional[Sequence[float]] = None):
        self.center = as_vec3(center)
        self.albedo = None if albedo is None else as_vec3(albedo)
        if self.albedo is not None and np.any((self.albedo < 0.0) | (self.albedo > 1.0)):
            raise GeometryError(f"Albedo components must lie in [0, 1], got {self.albedo}")

    @abstractmethod
    def distance(self, p: torch.Tensor) -> torch.Tensor:
        """Signed distance of points p (..., 3) already expressed relative to the center."""
        pass

    @abstractmethod
    def support(self, direction: np.ndarray) -> float:
        """max over the object of x . direction (inf for unbounded primitives)."""
        pass

    @abstractmethod
    def params(self) -> Dict[str, Any]:
        pass

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        center = torch.as_tensor(self.center, dtype=x.dtype, device=x.device)
        return self.distance(x - center)

    def sdf(self, x: torch.Tensor) -> torch.Tensor:
        return self(x)

    def numpy_sdf(self, x: np.ndarray) -> np.ndarray:
        """Float64 evaluation on an (N, 3) array."""
        with torch.no_grad():
            return self(torch.as_tensor(np.asarray(x, dtype=np.float64))).numpy()

    def contained_in(self, box: OrientedBox) -> bool:
        """True iff the object lies inside the closed box."""
        for axis in range(3):
            direction = box.rotation[:, axis]
            offset = float(box.center @ direction)
            h = box.half_extents[axis]
            if self.support(direction) > offset + h:
                return False
            if self.support(-direction) > -offset + h:
                return False
        return True

    def to_dict(self) -> Dict[str, Any]:
        data = {"type": self.tag, "center": [float(c) for c in self.center], **self.params()}
        if self.albedo is not None:
            data["albedo"] = [float(a) for a in self.albedo]
        return data


class Sphere(AnalyticSdf):
    tag = "sphere"

    def __init__(self, radius: float, center=(0.0, 0.0, 0.0), albedo=None):
        super().__init__(center, albedo)
        if radius <= 0.0:
            raise GeometryError(f"Sphere radius must be positive, got {radius}")
        self.radius = float(radius)

    def distance(self, p):
        return torch.sqrt((p * p).sum(dim=-1) + 1e-30) - self.radius

    def support(self, direction):
        return float(self.center @ direction) + self.radius * float(np.linalg.norm(direction))

    def params(self):
        return {"radius": self.radius}


class RoundedBox(AnalyticSdf):
    """Axis-aligned box with rounded edges; half_extents include the rounding."""
    tag = "rounded_box"

    def __init__(self, half_extents: Sequence[float], rounding: float = 0.0,
                 center=(0.0, 0.0, 0.0), albedo=None):
        super().__init__(center, albedo)
        self.half_extents = as_vec3(half_extents)
        self.rounding = float(rounding)
        if np.any(self.half_extents <= 0.0):
            raise GeometryError(f"Box half extents must be positive, got {self.half_extents}")
        if not 0.0 <= self.rounding <= float(self.half_extents.min()):
            raise GeometryError(f"Rounding must lie in [0, min half extent], got {self.rounding}")

    def distance(self, p):
        inner = torch.as_tensor(self.half_extents - self.rounding, dtype=p.dtype, device=p.device)
        q = p.abs() - inner
        outside = torch.clamp(q, min=0.0).norm(dim=-1)
        inside = torch.clamp(q.max(dim=-1).values, max=0.0)
        return outside + inside - self.rounding

    def support(self, direction):
        return float(self.center @ direction) + float(np.abs(direction) @ self.half_extents)

    def params(self):
        return {"half_extents": [float(h) for h in self.half_extents], "rounding": self.rounding}


class Torus(AnalyticSdf):
    """Torus around the z axis."""
    tag = "torus"

    def __init__(self, major_radius: float, minor_radius: float, center=(0.0, 0.0, 0.0),
                 albedo=None):
        super().__init__(center, albedo)
        if not 0.0 < minor_radius < major_radius:
            raise GeometryError(
                f"Torus needs 0 < minor < major, got minor={minor_radius}, major={major_radius}")
        self.major_radius = float(major_radius)
        self.minor_radius = float(minor_radius)

    def distance(self, p):
        ring = torch.sqrt(p[..., 0] ** 2 + p[..., 1] ** 2 + 1e-30) - self.major_radius
        return torch.sqrt(ring ** 2 + p[..., 2] ** 2 + 1e-30) - self.minor_radius

    def support(self, direction):
        d = np.asarray(direction, dtype=np.float64)
        return (float(self.center @ d) + self.major_radius * float(np.hypot(d[0], d[1]))
                + self.minor_radius * float(np.linalg.norm(d)))

    def params(self):
        return {"major_radius": self.major_radius, "minor_radius": self.minor_radius}


class Plane(AnalyticSdf):
    """g(x) = x . normal - offset; unbounded, only useful as a test oracle."""
    tag = "plane"

    def __init__(self, normal: Sequence[float], offset: float = 0.0, center=(0.0, 0.0, 0.0),
                 albedo=None):
        super().__init__(center, albedo)
        self.normal = normalize(normal)
        self.offset = float(offset)

    def distance(self, p):
        normal = torch.as_tensor(self.normal, dtype=p.dtype, device=p.device)
        return (p * normal).sum(dim=-1) - self.offset

    def support(self, direction):
        d = np.asarray(direction, dtype=np.float64)
        if np.allclose(np.cross(d, self.normal), 0.0):
            return float(self.center @ d) + self.offset * float(d @ self.normal)
        return np.inf

    def params(self):
        return {"normal": [float(n) for n in self.normal], "offset": self.offset}
