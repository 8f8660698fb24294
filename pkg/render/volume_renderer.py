"""
Volume rendering of internal ray segments with an SDF-derived opaque density.

A segment is sampled only on its in-box chord. Coarse stratified samples locate the
surface, inverse-CDF fine samples concentrate around it, and the merged set is shaded
to give the emitted color and the segment transmittance.

Randomness never comes from a shared generator: every segment derives its jitter
from a hash of (seed, salt, pixel, slot), so results do not depend on batching.
"""
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import torch

from utils.errors import RenderError
from utils.logger import get_logger

logger = get_logger(__name__)

# Segments shorter than this collapse to a single midpoint sample
DEGENERATE_LENGTH = 1e-9
# Floor for the Phi_s denominator in the discrete alpha
PHI_FLOOR = 1e-7
ALPHA_MAX = 1.0 - 1e-7
# Uniform weight floor per bin in the fine-sampling pdf
PDF_FLOOR = 1e-4

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def segment_keys(seed: int, salt: int, pixel_ids: np.ndarray, slots: np.ndarray) -> np.ndarray:
    """Per-segment 64-bit random keys."""
    pixel_ids = np.asarray(pixel_ids, dtype=np.int64).astype(np.uint64)
    slots = np.asarray(slots, dtype=np.int64).astype(np.uint64)
    key = _splitmix64(np.full(pixel_ids.shape, seed, dtype=np.uint64))
    key = _splitmix64(key ^ np.uint64(salt))
    key = _splitmix64(key ^ pixel_ids)
    return _splitmix64(key ^ slots)


def hash_uniform(keys: np.ndarray, count: int, stream: int) -> np.ndarray:
    """(S, count) uniforms in [0, 1) derived from per-segment keys."""
    counters = np.arange(count, dtype=np.uint64) + np.uint64(stream) * np.uint64(1 << 32)
    z = _splitmix64(np.asarray(keys, dtype=np.uint64)[:, None] ^ _splitmix64(counters)[None, :])
    return (z >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


@dataclass(frozen=True)
class Segment:
    """An internal chord: origin + t * direction for t in [t_start, t_end]."""
    origin: np.ndarray
    direction: np.ndarray
    t_start: float
    t_end: float

    @property
    def length(self) -> float:
        return self.t_end - self.t_start

    @classmethod
    def from_node(cls, node) -> "Segment":
        return cls(origin=node.ray.origin, direction=node.ray.direction,
                   t_start=float(node.t_start), t_end=float(node.t_end))


@dataclass
class SampleSet:
    """
    Sorted samples along segments.

    Tensors share leading dims: t is (..., M); points and gradients (..., M, 3);
    sdf (..., M); radiance (..., M, 3) where computed.
    """
    t: torch.Tensor
    points: Optional[torch.Tensor] = None
    sdf: Optional[torch.Tensor] = None
    gradients: Optional[torch.Tensor] = None
    radiance: Optional[torch.Tensor] = None

    def __len__(self) -> int:
        return self.t.shape[-1]


@dataclass
class RenderOutput:
    """Emitted color, segment transmittance and per-sample weights."""
    color: torch.Tensor
    transmittance: torch.Tensor
    weights: Optional[torch.Tensor] = None
    samples: Optional[SampleSet] = None


@dataclass
class SegmentBatch:
    """A flat batch of internal segments, with the keys that seed their sampling."""
    origins: torch.Tensor
    directions: torch.Tensor
    t_start: torch.Tensor
    t_end: torch.Tensor
    pixel_ids: np.ndarray
    slots: np.ndarray
    salt: int = 0

    def __len__(self) -> int:
        return self.origins.shape[0]

    @classmethod
    def from_forest(cls, forest, rows: np.ndarray, slots: np.ndarray,
                    dtype: torch.dtype = torch.float64, salt: int = 0) -> "SegmentBatch":
        return cls(
            origins=torch.as_tensor(forest.origins[rows, slots], dtype=dtype),
            directions=torch.as_tensor(forest.directions[rows, slots], dtype=dtype),
            t_start=torch.as_tensor(forest.t_start[rows, slots], dtype=dtype),
            t_end=torch.as_tensor(forest.t_end[rows, slots], dtype=dtype),
            pixel_ids=forest.pixel_ids[rows],
            slots=np.asarray(slots),
            salt=salt,
        )

    @classmethod
    def from_segments(cls, segments, dtype: torch.dtype = torch.float64) -> "SegmentBatch":
        segments = list(segments)
        return cls(
            origins=torch.as_tensor(np.stack([s.origin for s in segments]), dtype=dtype),
            directions=torch.as_tensor(np.stack([s.direction for s in segments]), dtype=dtype),
            t_start=torch.as_tensor([s.t_start for s in segments], dtype=dtype),
            t_end=torch.as_tensor([s.t_end for s in segments], dtype=dtype),
            pixel_ids=np.arange(len(segments)),
            slots=np.zeros(len(segments), dtype=np.int64),
        )

    def keys(self, seed: int) -> np.ndarray:
        return segment_keys(seed, self.salt, self.pixel_ids, self.slots)

    def points(self, t: torch.Tensor) -> torch.Tensor:
        return self.origins[:, None, :] + t[..., None] * self.directions[:, None, :]


def stratified_t(t_start: torch.Tensor, t_end: torch.Tensor, n: int,
                 u: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    One sample per equal sub-interval of every segment.

    Args:
        t_start: (S,) chord starts
        t_end: (S,) chord ends
        n: Samples per segment
        u: (S, n) jitter in [0, 1); None puts samples at sub-interval midpoints

    Returns:
        (S, n) sorted parameters; degenerate chords get n copies of their midpoint
    """
    length = (t_end - t_start)[:, None]
    offsets = torch.full((t_start.shape[0], n), 0.5, dtype=t_start.dtype) if u is None else u
    grid = torch.arange(n, dtype=t_start.dtype)[None, :]
    t = t_start[:, None] + (grid + offsets) / n * length
    midpoint = (t_start + 0.5 * (t_end - t_start))[:, None].expand_as(t)
    return torch.where(length < DEGENERATE_LENGTH, midpoint, t)


def inverse_cdf_t(edges: torch.Tensor, weights: torch.Tensor, n: int,
                  u: torch.Tensor) -> torch.Tensor:
    """
    Draw n parameters per row from the piecewise-constant pdf over bins.

    Args:
        edges: (S, B+1) bin edges
        weights: (S, B) non-negative bin weights
        n: Samples per row
        u: (S, n) sorted uniforms in [0, 1)

    Returns:
        (S, n) parameters, sorted
    """
    pdf = weights + PDF_FLOOR
    pdf = pdf / pdf.sum(dim=-1, keepdim=True)
    cdf = torch.cumsum(pdf, dim=-1)
    cdf = torch.cat([torch.zeros_like(cdf[:, :1]), cdf], dim=-1)
    cdf[:, -1] = 1.0

    index = torch.searchsorted(cdf, u.contiguous(), right=True)
    below = torch.clamp(index - 1, 0, weights.shape[-1] - 1)
    above = below + 1
    cdf_lo, cdf_hi = torch.gather(cdf, -1, below), torch.gather(cdf, -1, above)
    edge_lo, edge_hi = torch.gather(edges, -1, below), torch.gather(edges, -1, above)
    span = torch.clamp(cdf_hi - cdf_lo, min=1e-12)
    frac = torch.clamp((u - cdf_lo) / span, 0.0, 1.0)
    return edge_lo + frac * (edge_hi - edge_lo)


def opaque_alpha(g_i: Union[float, torch.Tensor], g_next: Union[float, torch.Tensor],
                 s: Union[float, torch.Tensor]):
    """
    Discrete opacity of the interval between two SDF samples.

    alpha = clamp((Phi_s(g_i) - Phi_s(g_next)) / Phi_s(g_i), 0, 1 - 1e-7)
    with Phi_s the logistic sigmoid of s * g.
    """
    scalar = not any(isinstance(v, torch.Tensor) for v in (g_i, g_next, s))
    g_i = torch.as_tensor(g_i, dtype=torch.float64) if scalar else g_i
    g_next = torch.as_tensor(g_next, dtype=torch.float64) if scalar else g_next
    s = torch.as_tensor(s, dtype=torch.float64) if scalar else s
    if bool((torch.as_tensor(s) <= 0).any()):
        raise RenderError(f"Sharpness must be positive, got {s}")

    phi_i = torch.sigmoid(s * g_i)
    phi_next = torch.sigmoid(s * g_next)
    alpha = (phi_i - phi_next) / torch.clamp(phi_i, min=PHI_FLOOR)
    alpha = torch.clamp(alpha, 0.0, ALPHA_MAX)
    return float(alpha) if scalar else alpha


def composite(alpha: torch.Tensor, colors: torch.Tensor
              ) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Front-to-back compositing.

    Args:
        alpha: (..., N) interval opacities
        colors: (..., N, 3) interval radiance

    Returns:
        weights (..., N), emitted color (..., 3), transmittance (...,)
    """
    survive = 1.0 - alpha
    transmit = torch.cumprod(survive, dim=-1)
    before = torch.cat([torch.ones_like(transmit[..., :1]), transmit[..., :-1]], dim=-1)
    weights = alpha * before
    color = (weights[..., None] * colors).sum(dim=-2)
    return weights, color, transmit[..., -1]


def sample_stratified(segment: Segment, n: int,
                      rng: Optional[np.random.Generator] = None) -> SampleSet:
    """
    Stratified samples on one segment.

    Args:
        segment: The chord
        n: Number of samples, at least 2
        rng: Jitter source; None disables jitter

    Returns:
        Samples at sorted parameters; a degenerate chord yields its midpoint only
    """
    if n < 2:
        raise RenderError(f"Stratified sampling needs n >= 2, got {n}")
    if segment.length < DEGENERATE_LENGTH:
        return SampleSet(t=torch.tensor([0.5 * (segment.t_start + segment.t_end)],
                                        dtype=torch.float64))
    u = None if rng is None else torch.as_tensor(rng.random((1, n)), dtype=torch.float64)
    t = stratified_t(torch.tensor([segment.t_start], dtype=torch.float64),
                     torch.tensor([segment.t_end], dtype=torch.float64), n, u)
    return SampleSet(t=t[0])


def render_segment(samples: SampleSet, s: Union[float, torch.Tensor]) -> RenderOutput:
    """
    Composite one segment from sampled SDF values and radiance.

    Interval i spans samples i and i+1, takes its opacity from their SDF values and
    its color from sample i.
    """
    if samples.sdf is None or samples.radiance is None:
        raise RenderError("render_segment needs sdf values and radiance on every sample")
    sdf = torch.as_tensor(samples.sdf)
    radiance = torch.as_tensor(samples.radiance)
    if sdf.shape[-1] < 2:
        zero = torch.zeros(3, dtype=sdf.dtype)
        return RenderOutput(color=zero, transmittance=torch.ones((), dtype=sdf.dtype),
                            weights=torch.zeros(0, dtype=sdf.dtype), samples=samples)

    s = s if isinstance(s, torch.Tensor) else torch.as_tensor(s, dtype=sdf.dtype)
    alpha = opaque_alpha(sdf[..., :-1], sdf[..., 1:], s)
    weights, color, transmittance = composite(alpha, radiance[..., :-1, :])
    return RenderOutput(color=color, transmittance=transmittance, weights=weights, samples=samples)


def sample_hierarchical(segment: Segment, coarse: SampleSet, weights: torch.Tensor, n_fine: int,
                        rng: Optional[np.random.Generator] = None) -> SampleSet:
    """
    Inverse-CDF fine samples over the coarse intervals, merged with the coarse set.

    Args:
        segment: The chord the coarse samples were drawn on
        coarse: Coarse samples (M parameters, M-1 intervals)
        weights: (M-1,) coarse interval weights
        n_fine: Number of extra samples
        rng: Source for the stratified uniforms; None uses bin-centered uniforms

    Returns:
        Sorted union of coarse and fine parameters
    """
    t_coarse = coarse.t.detach().to(torch.float64)
    weights = weights.detach().to(torch.float64)
    if n_fine <= 0:
        return SampleSet(t=t_coarse.clone())

    if not bool((weights > 0).any()):
        logger.warning("All coarse weights are zero, falling back to stratified fine samples")
        fine = sample_stratified(segment, max(n_fine, 2), rng).t[:n_fine]
    else:
        jitter = 0.5 if rng is None else rng.random(n_fine)
        u = torch.as_tensor((np.arange(n_fine) + jitter) / n_fine, dtype=torch.float64)
        fine = inverse_cdf_t(t_coarse[None, :], weights[None, :], n_fine, u[None, :])[0]

    merged, _ = torch.sort(torch.cat([t_coarse, fine]))
    return SampleSet(t=merged)


class VolumeRenderer:
    """
    Batched coarse-to-fine renderer of internal segments for a FieldBundle.

    Calling the renderer on a SegmentBatch returns a RenderOutput with one row per
    segment.
    """

    def __init__(self, fields, n_coarse: int = 64, n_fine: int = 64, jitter: bool = True,
                 seed: int = 0):
        if n_coarse < 2:
            raise RenderError(f"n_coarse must be at least 2, got {n_coarse}")
        if n_fine < 0:
            raise RenderError(f"n_fine must be non-negative, got {n_fine}")
        self.fields = fields
        self.n_coarse = n_coarse
        self.n_fine = n_fine
        self.jitter = jitter
        self.seed = seed

    def __call__(self, segments: SegmentBatch) -> RenderOutput:
        return self.render(segments)

    def _uniforms(self, keys: np.ndarray, count: int, stream: int, dtype) -> Optional[torch.Tensor]:
        if not self.jitter:
            return None
        return torch.as_tensor(hash_uniform(keys, count, stream), dtype=dtype)

    def sample(self, segments: SegmentBatch) -> torch.Tensor:
        """Coarse then fine parameters, with the chord end appended: (S, n_c + n_f + 1)."""
        dtype = segments.t_start.dtype
        keys = segments.keys(self.seed)
        t_end = segments.t_end[:, None]

        t_coarse = stratified_t(segments.t_start, segments.t_end, self.n_coarse,
                                self._uniforms(keys, self.n_coarse, 0, dtype))
        t_coarse = torch.cat([t_coarse, t_end], dim=-1)
        if self.n_fine == 0:
            return t_coarse

        with torch.no_grad():
            points = segments.points(t_coarse)
            sdf = self.fields.sdf(points)
            alpha = opaque_alpha(sdf[:, :-1], sdf[:, 1:], self.fields.sharpness())
            weights, _, _ = composite(alpha, torch.zeros(*alpha.shape, 3, dtype=dtype))

            jitter = self._uniforms(keys, self.n_fine, 1, dtype)
            if jitter is None:
                jitter = torch.full((len(segments), self.n_fine), 0.5, dtype=dtype)
            u = (torch.arange(self.n_fine, dtype=dtype)[None, :] + jitter) / self.n_fine
            fine = inverse_cdf_t(t_coarse, weights, self.n_fine, u)

            empty = weights.sum(dim=-1) <= 0.0
            if bool(empty.any()):
                logger.debug(f"{int(empty.sum())} segments have zero coarse weight, "
                             f"using stratified fine samples")
                fallback = stratified_t(segments.t_start, segments.t_end, self.n_fine,
                                        self._uniforms(keys, self.n_fine, 2, dtype))
                fine = torch.where(empty[:, None], fallback, fine)

        merged, _ = torch.sort(torch.cat([t_coarse[:, :-1], fine], dim=-1), dim=-1)
        return torch.cat([merged, t_end], dim=-1).detach()

    def render(self, segments: SegmentBatch) -> RenderOutput:
        t = self.sample(segments)
        points = segments.points(t)
        sdf, gradients = self.fields.sdf_and_gradient(points)

        normals = gradients[:, :-1] / torch.clamp(gradients[:, :-1].norm(dim=-1, keepdim=True),
                                                  min=1e-12)
        views = segments.directions[:, None, :].expand_as(normals)
        radiance = self.fields.radiance(points[:, :-1], views, normals)

        alpha = opaque_alpha(sdf[:, :-1], sdf[:, 1:], self.fields.sharpness())
        weights, color, transmittance = composite(alpha, radiance)
        samples = SampleSet(t=t, points=points, sdf=sdf, gradients=gradients, radiance=radiance)
        return RenderOutput(color=color, transmittance=transmittance, weights=weights,
                            samples=samples)
