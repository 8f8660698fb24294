"""
Hybrid renderer: recursive ray tracing through the transparent box combined with
volume-rendered radiance of the segments that run inside it.

A camera ray becomes a ray tree. Each box hit splits the ray into a reflected and a
refracted child and consumes one unit of the recursion budget. Colors are gathered
in reverse tracing order: escaping rays see the ambient light, internal segments
add their own emission and attenuate what lies behind them.

Trees are stored in heap order (slot k has children 2k+1 reflected and 2k+2
refracted) so that a batch of trees packs into fixed-width arrays and the
accumulation runs bottom-up over slots for the whole batch at once.
"""
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator

from scene.camera import Camera
from scene.geometry_core import (
    EPS_GEO, OrientedBox, Ray, Vec3, contains, intersect_ray_box, surface_normal,
)
from scene.optics import AIR_IOR, InterfaceEvent, interface_event, passthrough_event, refract
from utils.errors import GeometryError, OpticsError, RenderError
from utils.logger import get_logger

logger = get_logger(__name__)

GAMMA = 2.2
# Linear segment of the gamma curve below this value keeps gradients finite at 0
_GAMMA_LINEAR_BELOW = 1e-8


class TraceConfig(BaseModel):
    """Ray tracing and color accumulation settings."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    recursion_depth: int = Field(default=2, ge=0, le=8)
    ambient: Tuple[float, float, float] = (0.8, 0.8, 0.8)
    truncation_radiance: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    single_refraction_mode: bool = False
    interfaces_enabled: bool = True

    @field_validator("ambient")
    @classmethod
    def _ambient_in_unit_range(cls, value):
        if any(not 0.0 <= c <= 1.0 for c in value):
            raise ValueError(f"ambient components must lie in [0, 1], got {value}")
        return value

    @field_validator("truncation_radiance")
    @classmethod
    def _truncation_non_negative(cls, value):
        if any(c < 0.0 for c in value):
            raise ValueError(f"truncation_radiance must be non-negative, got {value}")
        return value

    @property
    def effective_depth(self) -> int:
        """Recursion budget actually used by trace."""
        if not self.interfaces_enabled or self.single_refraction_mode:
            return 1
        return self.recursion_depth

    @property
    def max_nodes(self) -> int:
        return 2 ** (self.effective_depth + 1) - 1


class Medium(IntEnum):
    EXTERNAL = 0
    INTERNAL = 1


class Termination(IntEnum):
    """How a segment ends."""
    NONE = 0          # empty heap slot
    EVENT = 1         # box face hit with children
    ESCAPE = 2        # leaves towards the ambient light
    TRUNCATED = 3     # recursion budget exhausted at a box face


@dataclass
class RayNode:
    """
    One segment of a ray tree.

    Attributes:
        slot: Heap index inside the tree
        ray: Segment ray
        medium: Internal (inside the box) or external
        t_start: Start parameter along ray
        t_end: End parameter, None when the segment escapes to infinity
        termination: What happens at the far end
        event: Interface split at the far end, when termination is EVENT
        events_before: Interface events on the path from the root to this node
    """
    slot: int
    ray: Ray
    medium: Medium
    t_start: float
    t_end: Optional[float]
    termination: Termination
    event: Optional[InterfaceEvent] = None
    events_before: int = 0
    reflected: Optional["RayNode"] = None
    refracted: Optional["RayNode"] = None

    @property
    def is_internal(self) -> bool:
        return self.medium == Medium.INTERNAL

    @property
    def children(self) -> List["RayNode"]:
        return [c for c in (self.reflected, self.refracted) if c is not None]


@dataclass
class RayTree:
    """Result of tracing one camera ray."""
    root: RayNode
    depth_budget: int

    @property
    def nodes(self) -> List[RayNode]:
        """Nodes in pre-order."""
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            stack.extend(reversed(node.children))
        return out

    def __len__(self) -> int:
        return len(self.nodes)

    def internal_segments(self) -> List[RayNode]:
        return [n for n in self.nodes if n.is_internal]


@dataclass(frozen=True)
class PixelColor:
    linear_rgb: np.ndarray
    intensity_rgb: np.ndarray


def _exit_normal_at_origin(ray: Ray, box: OrientedBox) -> Vec3:
    try:
        normal = surface_normal(box, ray.origin)
    except GeometryError:
        return ray.direction
    return normal if float(np.dot(normal, ray.direction)) > 0.0 else ray.direction


def trace(camera_ray: Ray, box: OrientedBox, cfg: TraceConfig) -> RayTree:
    """
    Trace a camera ray through the box into a deterministic ray tree.

    Args:
        camera_ray: Ray with unit direction
        box: The transparent container
        cfg: Trace settings (recursion depth, ablation modes)

    Returns:
        The ray tree; a ray missing the box yields a single external open segment
    """
    budget = cfg.effective_depth
    medium = Medium.INTERNAL if contains(box, camera_ray.origin) else Medium.EXTERNAL
    root = _trace_segment(camera_ray, box, cfg, medium, events_before=0, slot=0, budget=budget)
    return RayTree(root=root, depth_budget=budget)


def _trace_segment(ray: Ray, box: OrientedBox, cfg: TraceConfig, medium: Medium,
                   events_before: int, slot: int, budget: int) -> RayNode:
    if medium == Medium.EXTERNAL:
        return _trace_external(ray, box, cfg, events_before, slot, budget)
    return _trace_internal(ray, box, cfg, events_before, slot, budget)


def _trace_external(ray: Ray, box: OrientedBox, cfg: TraceConfig, events_before: int,
                    slot: int, budget: int) -> RayNode:
    hit = intersect_ray_box(ray, box)
    # A ray leaving a face of the convex box only grazes it at t ~ 0
    if hit is None or hit.t_enter <= EPS_GEO:
        return RayNode(slot=slot, ray=ray, medium=Medium.EXTERNAL, t_start=0.0, t_end=None,
                       termination=Termination.ESCAPE, events_before=events_before)

    node = RayNode(slot=slot, ray=ray, medium=Medium.EXTERNAL, t_start=0.0, t_end=hit.t_enter,
                   termination=Termination.TRUNCATED, events_before=events_before)
    if events_before >= budget:
        return node

    point = ray.at(hit.t_enter)
    normal = hit.normal_enter
    if not cfg.interfaces_enabled:
        event = passthrough_event(ray.direction, normal, AIR_IOR, AIR_IOR)
    elif cfg.single_refraction_mode:
        bent = refract(ray.direction, normal, AIR_IOR, box.ior)
        event = passthrough_event(ray.direction, normal, AIR_IOR, box.ior, refracted=bent)
    else:
        event = interface_event(ray.direction, normal, AIR_IOR, box.ior, entering=True)

    node.termination = Termination.EVENT
    node.event = event
    if event.reflectance > 0.0:
        node.reflected = _trace_segment(Ray(point, event.reflected), box, cfg, Medium.EXTERNAL,
                                        events_before + 1, 2 * slot + 1, budget)
    if event.refracted is not None:
        node.refracted = _trace_segment(Ray(point, event.refracted), box, cfg, Medium.INTERNAL,
                                        events_before + 1, 2 * slot + 2, budget)
    return node


def _trace_internal(ray: Ray, box: OrientedBox, cfg: TraceConfig, events_before: int,
                    slot: int, budget: int) -> RayNode:
    hit = intersect_ray_box(ray, box)
    if hit is None:
        # Numerically pinned to an edge; treat as a zero-length chord
        t_exit = 0.0
        outward = _exit_normal_at_origin(ray, box)
    else:
        t_exit = max(hit.t_exit, 0.0)
        outward = hit.normal_exit

    node = RayNode(slot=slot, ray=ray, medium=Medium.INTERNAL, t_start=0.0, t_end=t_exit,
                   termination=Termination.TRUNCATED, events_before=events_before)

    # Ablation modes: the chord ends by leaving straight to the ambient light
    if not cfg.interfaces_enabled or cfg.single_refraction_mode:
        node.termination = Termination.ESCAPE
        return node
    if events_before >= budget:
        return node

    point = ray.at(t_exit)
    event = interface_event(ray.direction, -outward, AIR_IOR, box.ior, entering=False)
    node.termination = Termination.EVENT
    node.event = event
    node.reflected = _trace_segment(Ray(point, event.reflected), box, cfg, Medium.INTERNAL,
                                    events_before + 1, 2 * slot + 1, budget)
    if event.refracted is not None:
        node.refracted = _trace_segment(Ray(point, event.refracted), box, cfg, Medium.EXTERNAL,
                                        events_before + 1, 2 * slot + 2, budget)
    return node


InternalRadiance = Callable[[RayNode], Tuple[np.ndarray, float]]


def accumulate(tree: RayTree, internal_radiance: InternalRadiance, cfg: TraceConfig,
               record: Optional[Dict[int, Dict[str, object]]] = None) -> np.ndarray:
    """
    Reverse-order color accumulation over a ray tree.

    Args:
        tree: Tree from trace
        internal_radiance: Maps an internal node to (emitted color, transmittance)
        cfg: Trace settings (ambient and truncation radiance)
        record: Optional dict filled with per-slot values for debugging

    Returns:
        Linear RGB of the camera ray
    """
    ambient = np.asarray(cfg.ambient, dtype=np.float64)
    truncated = np.asarray(cfg.truncation_radiance, dtype=np.float64)

    def visit(node: RayNode) -> np.ndarray:
        if node.termination == Termination.ESCAPE:
            downstream = ambient.copy()
        elif node.termination == Termination.TRUNCATED:
            downstream = truncated.copy()
        elif node.termination == Termination.EVENT:
            event = node.event
            if event is None:
                raise RenderError(f"Slot {node.slot} ends in an event but carries none")
            if event.reflectance > 0.0 and node.reflected is None:
                raise RenderError(f"Slot {node.slot} is missing its reflected child")
            if event.transmittance > 0.0 and node.refracted is None:
                raise RenderError(f"Slot {node.slot} is missing its refracted child")
            downstream = np.zeros(3)
            if node.reflected is not None:
                downstream = downstream + event.reflectance * visit(node.reflected)
            if node.refracted is not None:
                downstream = downstream + event.transmittance * visit(node.refracted)
        else:
            raise RenderError(f"Slot {node.slot} has no termination")

        emitted, transmittance = np.zeros(3), 1.0
        if node.is_internal:
            emitted, transmittance = internal_radiance(node)
            emitted = np.asarray(emitted, dtype=np.float64)
            value = emitted + float(transmittance) * downstream
        else:
            value = downstream

        if record is not None:
            record[node.slot] = {
                "emitted": emitted, "transmittance": float(transmittance), "color": value,
            }
        return value

    return visit(tree.root)


@dataclass
class RayForest:
    """
    A batch of ray trees packed in heap order.

    Arrays have shape (P, K) or (P, K, 3) with K = 2^(depth+1) - 1. Empty slots carry
    Termination.NONE.
    """
    termination: np.ndarray
    internal: np.ndarray
    origins: np.ndarray
    directions: np.ndarray
    t_start: np.ndarray
    t_end: np.ndarray
    reflectance: np.ndarray
    transmittance: np.ndarray
    pixel_ids: np.ndarray

    @property
    def num_pixels(self) -> int:
        return self.termination.shape[0]

    @property
    def num_slots(self) -> int:
        return self.termination.shape[1]

    @classmethod
    def pack(cls, trees: Sequence[RayTree], depth: int,
             pixel_ids: Optional[np.ndarray] = None) -> "RayForest":
        num_slots = 2 ** (depth + 1) - 1
        p = len(trees)
        forest = cls(
            termination=np.zeros((p, num_slots), dtype=np.int8),
            internal=np.zeros((p, num_slots), dtype=bool),
            origins=np.zeros((p, num_slots, 3)),
            directions=np.zeros((p, num_slots, 3)),
            t_start=np.zeros((p, num_slots)),
            t_end=np.full((p, num_slots), np.inf),
            reflectance=np.zeros((p, num_slots)),
            transmittance=np.zeros((p, num_slots)),
            pixel_ids=np.arange(p, dtype=np.int64) if pixel_ids is None
            else np.asarray(pixel_ids, dtype=np.int64),
        )
        for i, tree in enumerate(trees):
            for node in tree.nodes:
                k = node.slot
                if k >= num_slots:
                    raise RenderError(f"Tree {i} uses slot {k} beyond depth {depth}")
                forest.termination[i, k] = int(node.termination)
                forest.internal[i, k] = node.is_internal
                forest.origins[i, k] = node.ray.origin
                forest.directions[i, k] = node.ray.direction
                forest.t_start[i, k] = node.t_start
                if node.t_end is not None:
                    forest.t_end[i, k] = node.t_end
                if node.event is not None:
                    forest.reflectance[i, k] = node.event.reflectance
                    forest.transmittance[i, k] = node.event.transmittance
        return forest

    def take(self, index: np.ndarray) -> "RayForest":
        """Sub-forest of the given pixel rows."""
        return RayForest(
            termination=self.termination[index],
            internal=self.internal[index],
            origins=self.origins[index],
            directions=self.directions[index],
            t_start=self.t_start[index],
            t_end=self.t_end[index],
            reflectance=self.reflectance[index],
            transmittance=self.transmittance[index],
            pixel_ids=self.pixel_ids[index],
        )

    @classmethod
    def concatenate(cls, forests: Sequence["RayForest"]) -> "RayForest":
        return cls(**{
            name: np.concatenate([getattr(f, name) for f in forests], axis=0)
            for name in ("termination", "internal", "origins", "directions", "t_start",
                         "t_end", "reflectance", "transmittance", "pixel_ids")
        })

    def internal_index(self) -> Tuple[np.ndarray, np.ndarray]:
        """(pixel row, slot) pairs of every internal segment, row-major."""
        return np.nonzero(self.internal)


def accumulate_forest(forest: RayForest, seg_color: torch.Tensor, seg_trans: torch.Tensor,
                      cfg: TraceConfig) -> torch.Tensor:
    """
    Bottom-up accumulation of a packed forest.

    Args:
        forest: Packed trees
        seg_color: (P, K, 3) emitted color of internal slots (ignored elsewhere)
        seg_trans: (P, K) transmittance of internal slots (ignored elsewhere)
        cfg: Trace settings

    Returns:
        (P, 3) linear RGB per camera ray
    """
    dtype, device = seg_color.dtype, seg_color.device
    num_pixels, num_slots = forest.termination.shape
    ambient = torch.tensor(cfg.ambient, dtype=dtype, device=device)
    truncated = torch.tensor(cfg.truncation_radiance, dtype=dtype, device=device)
    zeros = torch.zeros(num_pixels, 3, dtype=dtype, device=device)

    termination = torch.as_tensor(forest.termination.astype(np.int64), device=device)
    internal = torch.as_tensor(forest.internal, device=device)
    reflectance = torch.as_tensor(forest.reflectance, dtype=dtype, device=device)
    transmittance = torch.as_tensor(forest.transmittance, dtype=dtype, device=device)

    values: List[Optional[torch.Tensor]] = [None] * num_slots
    for k in reversed(range(num_slots)):
        kind = termination[:, k:k + 1]
        left = values[2 * k + 1] if 2 * k + 1 < num_slots else zeros
        right = values[2 * k + 2] if 2 * k + 2 < num_slots else zeros
        split = reflectance[:, k:k + 1] * left + transmittance[:, k:k + 1] * right

        downstream = torch.where(kind == int(Termination.ESCAPE), ambient.expand(num_pixels, 3), zeros)
        downstream = torch.where(kind == int(Termination.TRUNCATED), truncated.expand(num_pixels, 3),
                                 downstream)
        downstream = torch.where(kind == int(Termination.EVENT), split, downstream)

        inside = seg_color[:, k] + seg_trans[:, k:k + 1] * downstream
        values[k] = torch.where(internal[:, k:k + 1], inside, downstream)
    return values[0]


def gamma_correct(linear: Union[np.ndarray, torch.Tensor, Sequence[float]]):
    """
    Camera response G(C) = C^(1/2.2), applied per channel.

    Raises:
        OpticsError: On negative input
    """
    if isinstance(linear, torch.Tensor):
        if bool((linear.detach() < 0).any()):
            raise OpticsError("gamma_correct got negative radiance")
        safe = torch.clamp(linear, min=_GAMMA_LINEAR_BELOW)
        slope = _GAMMA_LINEAR_BELOW ** (1.0 / GAMMA - 1.0)
        return torch.where(linear > _GAMMA_LINEAR_BELOW, safe ** (1.0 / GAMMA), linear * slope)

    values = np.asarray(linear, dtype=np.float64)
    if np.any(values < 0.0):
        raise OpticsError(f"gamma_correct got negative radiance {values}")
    return np.power(values, 1.0 / GAMMA)


def to_8bit(intensity: np.ndarray) -> np.ndarray:
    """round(255 * intensity), clipped to the 8-bit range."""
    return np.clip(np.round(255.0 * np.asarray(intensity, dtype=np.float64)), 0, 255).astype(np.uint8)


@dataclass
class ForestRender:
    """Everything a batched render produces."""
    linear: torch.Tensor
    seg_color: torch.Tensor
    seg_trans: torch.Tensor
    gradients: Optional[torch.Tensor] = None


def render_forest(forest: RayForest, segment_radiance, cfg: TraceConfig,
                  dtype: torch.dtype = torch.float64, salt: int = 0) -> ForestRender:
    """
    Render every internal segment of a forest and accumulate the camera colors.

    Args:
        forest: Packed trees
        segment_radiance: Callable mapping a SegmentBatch to a RenderOutput
            (VolumeRenderer for neural fields, SphereTracer for analytic oracles)
        cfg: Trace settings
        dtype: Floating point precision of the result
        salt: Extra seed material for stochastic sampling (the training iteration)

    Returns:
        Linear colors plus the per-slot segment outputs
    """
    from render.volume_renderer import SegmentBatch

    num_pixels, num_slots = forest.termination.shape
    rows, slots = forest.internal_index()
    seg_color = torch.zeros(num_pixels, num_slots, 3, dtype=dtype)
    seg_trans = torch.ones(num_pixels, num_slots, dtype=dtype)
    gradients = None

    if len(rows) > 0:
        segments = SegmentBatch.from_forest(forest, rows, slots, dtype=dtype, salt=salt)
        output = segment_radiance(segments)
        index = torch.as_tensor(rows * num_slots + slots, dtype=torch.long)
        seg_color = seg_color.reshape(-1, 3).index_put((index,), output.color).reshape(
            num_pixels, num_slots, 3)
        seg_trans = seg_trans.reshape(-1).index_put((index,), output.transmittance).reshape(
            num_pixels, num_slots)
        if output.samples is not None and output.samples.gradients is not None:
            gradients = output.samples.gradients.reshape(-1, 3)

    linear = accumulate_forest(forest, seg_color, seg_trans, cfg)
    return ForestRender(linear=linear, seg_color=seg_color, seg_trans=seg_trans,
                        gradients=gradients)


def trace_pixels(camera: Camera, rows: np.ndarray, cols: np.ndarray, box: OrientedBox,
                 cfg: TraceConfig, pixel_offset: int = 0) -> RayForest:
    """Trace the given pixels of one camera into a packed forest."""
    directions = camera.pixel_directions(rows, cols)
    origin = camera.position
    trees = [trace(Ray(origin, d), box, cfg) for d in directions]
    pixel_ids = pixel_offset + rows.astype(np.int64) * camera.intrinsics.width + cols
    return RayForest.pack(trees, cfg.effective_depth, pixel_ids=pixel_ids)


def render_view(camera: Camera, box: OrientedBox, segment_radiance, cfg: TraceConfig,
                dtype: torch.dtype = torch.float64, chunk: int = 4096) -> np.ndarray:
    """
    Render a full image.

    Returns:
        (H, W, 3) gamma-corrected intensities as float64
    """
    rows, cols = camera.pixel_grid()
    forest = trace_pixels(camera, rows, cols, box, cfg)
    out = np.zeros((len(rows), 3))
    with torch.no_grad():
        for start in range(0, len(rows), chunk):
            part = forest.take(np.arange(start, min(start + chunk, len(rows))))
            result = render_forest(part, segment_radiance, cfg, dtype=dtype)
            out[start:start + chunk] = gamma_correct(result.linear.detach()).cpu().numpy()
    k = camera.intrinsics
    return out.reshape(k.height, k.width, 3)


def render_pixel(camera: Camera, pixel: Tuple[int, int], segment_radiance, box: OrientedBox,
                 cfg: TraceConfig, dtype: torch.dtype = torch.float64) -> PixelColor:
    """
    Render one pixel through its center.

    Args:
        camera: Calibrated camera
        pixel: (row, col)
        segment_radiance: Internal radiance provider (VolumeRenderer or SphereTracer)
        box: The transparent container
        cfg: Trace settings

    Returns:
        Linear and gamma-corrected color
    """
    row, col = pixel
    tree = trace(camera.ray_through_pixel(row, col), box, cfg)
    forest = RayForest.pack([tree], cfg.effective_depth,
                            pixel_ids=np.array([row * camera.intrinsics.width + col]))
    with torch.no_grad():
        result = render_forest(forest, segment_radiance, cfg, dtype=dtype)
    linear = result.linear.detach()[0].cpu().numpy().astype(np.float64)
    return PixelColor(linear_rgb=linear, intensity_rgb=gamma_correct(linear))


def describe_tree(tree: RayTree, record: Dict[int, Dict[str, object]]) -> List[str]:
    """Human-readable dump of a traced and accumulated tree."""
    lines = []
    for node in tree.nodes:
        indent = "  " * node.events_before
        t_end = "open" if node.t_end is None else f"{node.t_end:.6f}"
        values = record.get(node.slot, {})
        color = values.get("color", np.full(3, np.nan))
        line = (f"{indent}[{node.slot}] {node.medium.name.lower()} "
                f"t=[{node.t_start:.6f}, {t_end}] end={node.termination.name.lower()}")
        if node.event is not None:
            line += f" R={node.event.reflectance:.6f} T_re={node.event.transmittance:.6f}"
        if node.is_internal:
            emitted = values.get("emitted", np.full(3, np.nan))
            line += (f" T_seg={values.get('transmittance', float('nan')):.6f}"
                     f" C_hat=({emitted[0]:.6f}, {emitted[1]:.6f}, {emitted[2]:.6f})")
        line += f" C=({color[0]:.6f}, {color[1]:.6f}, {color[2]:.6f})"
        lines.append(line)
    return lines
