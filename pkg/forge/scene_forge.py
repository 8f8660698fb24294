"""
Synthetic dataset generation: analytic opaque objects in (or without) a glass box,
lit by uniform ambient light and rendered through the same trace/accumulate code
that training uses.
"""
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from tqdm import tqdm

from field.analytic_sdf import AnalyticSdf
from field.sdf_factory import SdfFactory
from render.hybrid_renderer import (
    TraceConfig, gamma_correct, render_forest, to_8bit, trace_pixels,
)
from render.volume_renderer import RenderOutput, SegmentBatch
from scene.camera import Camera, Intrinsics
from scene.geometry_core import OrientedBox, Ray, intersect_ray_box
from storage.dataset_store import SceneDataset
from utils.errors import DatasetError, GeometryError
from utils.logger import get_logger

logger = get_logger(__name__)

SPHERE_TRACE_ITERATIONS = 64
SPHERE_TRACE_TOLERANCE = 1e-5
# Camera directions closer than this to the up axis are re-drawn
_POLE_COS = 1.0 - 1e-6


class BoxConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: Tuple[float, ...] = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)
    half_extents: Tuple[float, float, float] = (0.5, 0.5, 0.5)
    ior: float = 1.45

    @field_validator("rotation")
    @classmethod
    def _nine_entries(cls, value):
        if len(value) != 9:
            raise ValueError(f"rotation needs 9 row-major entries, got {len(value)}")
        return value

    @model_validator(mode="after")
    def _valid_geometry(self):
        try:
            self.build()
        except GeometryError as e:
            raise ValueError(str(e)) from e
        return self

    def build(self) -> OrientedBox:
        return OrientedBox(center=self.center, rotation=np.asarray(self.rotation).reshape(3, 3),
                           half_extents=self.half_extents, ior=self.ior)


class CameraConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    focal: float = Field(default=230.0, gt=0.0)
    cx: float = 48.0
    cy: float = 48.0
    width: int = Field(default=96, ge=1)
    height: int = Field(default=96, ge=1)

    def build(self) -> Intrinsics:
        return Intrinsics(focal=self.focal, cx=self.cx, cy=self.cy,
                          width=self.width, height=self.height)


class SceneConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    object: Optional[Dict[str, Any]] = {"type": "sphere", "radius": 0.4, "albedo": [0.6, 0.6, 0.6]}
    box: BoxConfig = BoxConfig()
    with_box: bool = True
    camera: CameraConfig = CameraConfig()
    num_views: int = Field(default=20, ge=1)
    camera_radius: float = Field(default=5.0, gt=0.0)
    seed: int = 0
    render_without_box_companion: bool = False

    @field_validator("object")
    @classmethod
    def _known_primitive(cls, value):
        if value is not None:
            SdfFactory.from_dict(value)
        return value


@dataclass(frozen=True)
class SceneSpec:
    """A fully built scene, ready to render."""
    object: Optional[AnalyticSdf]
    box: OrientedBox
    with_box: bool
    ambient: Tuple[float, float, float]
    intrinsics: Intrinsics
    num_views: int
    camera_radius: float
    seed: int

    @classmethod
    def from_config(cls, scene: SceneConfig, trace: TraceConfig) -> "SceneSpec":
        spec = cls(
            object=SdfFactory.from_dict(scene.object),
            box=scene.box.build(),
            with_box=scene.with_box,
            ambient=tuple(trace.ambient),
            intrinsics=scene.camera.build(),
            num_views=scene.num_views,
            camera_radius=scene.camera_radius,
            seed=scene.seed,
        )
        spec.validate()
        return spec

    def validate(self) -> None:
        """
        Raises:
            DatasetError: If the object leaves the box or the box leaves the unit sphere
        """
        if self.object is not None and not self.object.contained_in(self.box):
            raise DatasetError(f"Object {self.object.to_dict()} is not contained in the box")
        radius = float(np.linalg.norm(self.box.corners(), axis=1).max())
        if radius > 1.0 + 1e-9:
            raise DatasetError(f"Box reaches radius {radius:.6f}, outside the unit sphere")

    def oracle_trace_config(self, trace: TraceConfig) -> TraceConfig:
        """Scenes without the box treat it as a non-optical bounding volume."""
        if self.with_box:
            return trace
        return trace.model_copy(update={"interfaces_enabled": False,
                                        "single_refraction_mode": False})


def sample_cameras(n: int, radius: float, intrinsics: Intrinsics, seed: int) -> List[Camera]:
    """
    Cameras uniformly distributed on a sphere, all looking at the origin with +z up.

    Args:
        n: Number of cameras, at least 1
        radius: Sphere radius
        intrinsics: Shared intrinsics
        seed: Seed of the position draw

    Returns:
        Cameras in draw order
    """
    if n < 1:
        raise DatasetError(f"Need at least one camera, got {n}")
    rng = np.random.default_rng(seed)
    cameras = []
    while len(cameras) < n:
        g = rng.standard_normal(3)
        norm = float(np.linalg.norm(g))
        if norm < 1e-12:
            continue
        u = g / norm
        if abs(u[2]) > _POLE_COS:
            continue
        cameras.append(Camera.look_at(radius * u, intrinsics))
    return cameras


class SphereTracer:
    """
    Internal radiance of an analytic scene: first opaque hit along each segment.

    A hit emits albedo * ambient and blocks everything behind it.
    """

    def __init__(self, obj: Optional[AnalyticSdf], ambient, max_iterations: int = SPHERE_TRACE_ITERATIONS,
                 tolerance: float = SPHERE_TRACE_TOLERANCE):
        self.obj = obj
        self.ambient = np.asarray(ambient, dtype=np.float64)
        self.max_iterations = max_iterations
        self.tolerance = tolerance

    def hits(self, origins: np.ndarray, directions: np.ndarray, t_start: np.ndarray,
             t_end: np.ndarray) -> np.ndarray:
        """Boolean hit mask per segment."""
        if self.obj is None:
            return np.zeros(len(origins), dtype=bool)
        t = t_start.copy()
        hit = np.zeros(len(origins), dtype=bool)
        active = np.ones(len(origins), dtype=bool)
        for _ in range(self.max_iterations):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            d = self.obj.numpy_sdf(origins[idx] + t[idx, None] * directions[idx])
            close = d < self.tolerance
            hit[idx[close]] = True
            t[idx] += np.where(close, 0.0, d)
            active[idx[close]] = False
            active[idx[t[idx] > t_end[idx]]] = False
        return hit

    def __call__(self, segments: SegmentBatch) -> RenderOutput:
        dtype = segments.origins.dtype
        hit = self.hits(segments.origins.detach().cpu().numpy().astype(np.float64),
                        segments.directions.detach().cpu().numpy().astype(np.float64),
                        segments.t_start.detach().cpu().numpy().astype(np.float64),
                        segments.t_end.detach().cpu().numpy().astype(np.float64))
        albedo = np.zeros(3) if self.obj is None or self.obj.albedo is None else self.obj.albedo
        color = np.where(hit[:, None], albedo * self.ambient, 0.0)
        transmittance = np.where(hit, 0.0, 1.0)
        return RenderOutput(color=torch.as_tensor(color, dtype=dtype),
                            transmittance=torch.as_tensor(transmittance, dtype=dtype))


@dataclass
class OracleView:
    camera: Camera
    image: np.ndarray
    mask: np.ndarray


def oracle_render(scene: SceneSpec, camera: Camera, cfg: TraceConfig,
                  with_box: Optional[bool] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Render one view of an analytic scene.

    Args:
        scene: Validated scene
        camera: View to render
        cfg: Trace settings (recursion depth, ambient)
        with_box: Override of scene.with_box, used for the companion subset

    Returns:
        (H, W, 3) uint8 image and (H, W) uint8 mask with 255 = in
    """
    if with_box is not None and with_box != scene.with_box:
        scene = replace(scene, with_box=with_box)
    trace_cfg = scene.oracle_trace_config(cfg.model_copy(update={"ambient": scene.ambient}))
    tracer = SphereTracer(scene.object, scene.ambient)

    rows, cols = camera.pixel_grid()
    forest = trace_pixels(camera, rows, cols, scene.box, trace_cfg)
    with torch.no_grad():
        result = render_forest(forest, tracer, trace_cfg, dtype=torch.float64)
    intensity = gamma_correct(result.linear.numpy())

    k = camera.intrinsics
    if scene.with_box:
        origin = camera.position
        directions = camera.pixel_directions(rows, cols)
        mask = np.array([intersect_ray_box(Ray(origin, d), scene.box) is not None
                         for d in directions])
    else:
        # Bounding-volume trees: slot 2 is the in-box chord of the camera ray
        mask = forest.internal[:, 2] & (result.seg_trans[:, 2].numpy() == 0.0) \
            if forest.num_slots > 2 else np.zeros(len(rows), dtype=bool)

    image = to_8bit(intensity).reshape(k.height, k.width, 3)
    mask_image = np.where(mask, 255, 0).astype(np.uint8).reshape(k.height, k.width)
    return image, mask_image


def render_views(scene: SceneSpec, cameras: List[Camera], cfg: TraceConfig,
                 with_box: Optional[bool] = None, desc: str = "forge") -> List[OracleView]:
    views = []
    for camera in tqdm(cameras, desc=desc, unit="view"):
        image, mask = oracle_render(scene, camera, cfg, with_box=with_box)
        views.append(OracleView(camera=camera, image=image, mask=mask))
    return views


def _as_dataset(spec: SceneSpec, views: List[OracleView], with_box: bool,
                generator_config: Dict[str, Any]) -> SceneDataset:
    return SceneDataset(
        cameras=[v.camera for v in views],
        images=np.stack([v.image for v in views]),
        masks=np.stack([v.mask for v in views]) > 0,
        box=spec.box,
        ambient=spec.ambient,
        seed=spec.seed,
        with_box=with_box,
        object_spec=None if spec.object is None else spec.object.to_dict(),
        generator_config=generator_config,
    )


def forge_dataset(scene_cfg: SceneConfig, trace: TraceConfig) -> SceneDataset:
    """
    Build the scene, sample cameras and render every view (plus the optional
    companion subset without the box).

    Raises:
        DatasetError: If the object escapes the box or the box the unit sphere
    """
    spec = SceneSpec.from_config(scene_cfg, trace)
    cameras = sample_cameras(spec.num_views, spec.camera_radius, spec.intrinsics, spec.seed)
    generator_config = {"scene": scene_cfg.model_dump(mode="json"),
                        "trace": trace.model_dump(mode="json")}
    logger.info(f"Forging {len(cameras)} views at {spec.intrinsics.width}x{spec.intrinsics.height}, "
                f"with_box={spec.with_box}")

    dataset = _as_dataset(spec, render_views(spec, cameras, trace), spec.with_box, generator_config)
    if scene_cfg.render_without_box_companion and spec.with_box:
        companion_views = render_views(spec, cameras, trace, with_box=False, desc="forge w/o box")
        dataset.companion = _as_dataset(spec, companion_views, False, generator_config)
    return dataset
