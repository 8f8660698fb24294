"""
Tests for segment sampling, opaque-density compositing and the batched renderer.
"""
import math

import numpy as np
import pytest
import torch

from field.analytic_sdf import Plane, Sphere
from field.neural_field import sdf_and_gradient
from render.volume_renderer import (SampleSet, Segment, SegmentBatch, VolumeRenderer,
                                    composite, opaque_alpha, render_segment,
                                    sample_hierarchical, sample_stratified, segment_keys)
from scene.geometry_core import OrientedBox, contains
from utils.errors import RenderError


class AnalyticFields:
    """Analytic geometry with a constant color, in the interface VolumeRenderer expects."""

    dtype = torch.float64

    def __init__(self, obj, s=200.0, color=(0.2, 0.5, 0.7)):
        self.obj = obj
        self.s = s
        self.color = torch.tensor(color, dtype=torch.float64)

    def sharpness(self):
        return torch.tensor(self.s, dtype=torch.float64)

    def sdf(self, x):
        return self.obj(x)

    def sdf_and_gradient(self, x):
        return sdf_and_gradient(self.obj, x)

    def radiance(self, x, v, n):
        return self.color.expand(*x.shape[:-1], 3)


def x_chord(y=0.0, z=0.0):
    """The in-box chord of a ray along +x through the half-size-0.5 box."""
    return Segment(origin=np.array([-0.5, y, z]), direction=np.array([1.0, 0.0, 0.0]),
                   t_start=0.0, t_end=1.0)


def shade(samples: SampleSet, sdf_fn, color=(1.0, 1.0, 1.0)) -> SampleSet:
    origin = np.array([-1.0, 0.0, 0.0])
    points = origin + samples.t.numpy()[:, None] * np.array([1.0, 0.0, 0.0])
    sdf = torch.as_tensor(sdf_fn(points))
    radiance = torch.tensor(color, dtype=torch.float64).expand(len(samples), 3)
    return SampleSet(t=samples.t, sdf=sdf, radiance=radiance)


def test_stratified_midpoints_without_jitter():
    samples = sample_stratified(Segment(np.zeros(3), np.array([1.0, 0, 0]), 0.0, 1.0), 4)
    np.testing.assert_allclose(samples.t.numpy(), [0.125, 0.375, 0.625, 0.875])


def test_stratified_jitter_is_reproducible():
    segment = x_chord()
    first = sample_stratified(segment, 16, np.random.default_rng(7)).t
    second = sample_stratified(segment, 16, np.random.default_rng(7)).t
    assert torch.equal(first, second)


def test_stratified_gap_bound():
    segment = Segment(np.zeros(3), np.array([0.0, 0.0, 1.0]), 1.0, 3.0)
    t = sample_stratified(segment, 64, np.random.default_rng(0)).t.numpy()
    assert np.all(np.diff(t) > 0)
    assert np.diff(t).max() <= 2 * (2.0 / 64)
    assert t.min() >= 1.0 and t.max() <= 3.0


def test_degenerate_segment_collapses_to_midpoint():
    samples = sample_stratified(Segment(np.zeros(3), np.array([1.0, 0, 0]), 0.5, 0.5 + 1e-12), 8)
    assert len(samples) == 1
    assert float(samples.t[0]) == pytest.approx(0.5)


def test_stratified_needs_two_samples():
    with pytest.raises(RenderError):
        sample_stratified(x_chord(), 1)


def test_opaque_alpha_formula():
    # logit(0.8) and logit(0.4) with s = 1
    assert opaque_alpha(math.log(4.0), math.log(2.0 / 3.0), 1.0) == pytest.approx(0.5, abs=1e-12)


def test_opaque_alpha_zero_when_not_entering():
    assert opaque_alpha(0.3, 0.3, 50.0) == 0.0
    assert opaque_alpha(-0.1, 0.2, 50.0) == 0.0


def test_opaque_alpha_rejects_non_positive_sharpness():
    with pytest.raises(RenderError):
        opaque_alpha(0.1, 0.0, 0.0)


def test_composite_examples():
    c1, c2 = torch.tensor([1.0, 0.0, 0.0]), torch.tensor([0.0, 1.0, 0.0])
    weights, color, transmittance = composite(torch.tensor([0.5, 0.5]), torch.stack([c1, c2]))
    np.testing.assert_allclose(color.numpy(), (0.5 * c1 + 0.25 * c2).numpy())
    assert float(transmittance) == pytest.approx(0.25)

    weights, color, transmittance = composite(torch.tensor([1.0]), c1[None])
    np.testing.assert_allclose(color.numpy(), c1.numpy())
    assert float(transmittance) == 0.0


def test_conservation_and_log_identity():
    rng = np.random.default_rng(9)
    for _ in range(50):
        alpha = torch.as_tensor(rng.uniform(0.0, 0.99, size=int(rng.integers(2, 100))))
        weights, _, transmittance = composite(alpha, torch.ones(len(alpha), 3, dtype=torch.float64))
        assert float(weights.sum() + transmittance) == pytest.approx(1.0, abs=1e-6)
        assert float(transmittance) == pytest.approx(math.exp(float(torch.log1p(-alpha).sum())),
                                                     abs=1e-6)


def test_render_segment_empty_space():
    samples = shade(sample_stratified(x_chord(), 32), lambda p: np.full(len(p), 0.7))
    out = render_segment(samples, 100.0)
    np.testing.assert_allclose(out.color.numpy(), 0.0)
    assert float(out.transmittance) == 1.0


def test_render_segment_needs_two_samples():
    single = SampleSet(t=torch.tensor([0.5], dtype=torch.float64), sdf=torch.tensor([0.1]),
                       radiance=torch.ones(1, 3))
    out = render_segment(single, 10.0)
    assert float(out.transmittance) == 1.0
    with pytest.raises(RenderError):
        render_segment(SampleSet(t=torch.tensor([0.1, 0.2])), 10.0)


def test_weight_peak_sits_on_plane_crossing():
    plane = Plane(normal=(-1.0, 0.0, 0.0), offset=-0.3)
    segment = Segment(np.array([-1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]), 0.0, 2.0)
    samples = shade(sample_stratified(segment, 512), plane.numpy_sdf)
    out = render_segment(samples, 200.0)
    peak = float(samples.t[int(torch.argmax(out.weights))])
    assert abs(peak - 1.3) <= 2.0 / 512


def test_first_crossing_takes_the_weight():
    def two_walls(p):
        x = p[:, 0]
        return np.minimum(np.abs(x - 0.4) - 0.1, 0.7 - x)

    segment = Segment(np.array([-1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]), 0.0, 2.0)
    samples = shade(sample_stratified(segment, 512), two_walls)
    out = render_segment(samples, 200.0)
    x = samples.t.numpy()[:-1] - 1.0
    weights = out.weights.numpy()
    assert weights[x < 0.6].sum() >= 0.95 * weights.sum()


def test_hierarchical_concentrates_on_heavy_bin():
    segment = x_chord()
    coarse = SampleSet(t=torch.linspace(0.0, 1.0, 65, dtype=torch.float64))
    weights = torch.zeros(64, dtype=torch.float64)
    weights[10] = 1.0
    merged = sample_hierarchical(segment, coarse, weights, 200, np.random.default_rng(1)).t
    lo, hi = float(coarse.t[10]), float(coarse.t[11])
    inside = int(((merged > lo) & (merged < hi)).sum())
    assert inside >= 0.9 * 200
    assert len(merged) == 265


def test_hierarchical_uniform_weights_spread_evenly():
    coarse = SampleSet(t=torch.linspace(0.0, 1.0, 65, dtype=torch.float64))
    merged = sample_hierarchical(x_chord(), coarse, torch.ones(64, dtype=torch.float64), 640,
                                 np.random.default_rng(2)).t.numpy()
    fine = np.setdiff1d(merged, coarse.t.numpy())
    counts, _ = np.histogram(fine, bins=coarse.t.numpy())
    sigma = math.sqrt(10.0 * (1.0 - 1.0 / 64))
    assert np.all(np.abs(counts - 10.0) <= 3.0 * sigma)


def test_hierarchical_zero_weights_fall_back_to_stratified():
    segment = x_chord()
    coarse = sample_stratified(segment, 16)
    merged = sample_hierarchical(segment, coarse, torch.zeros(15, dtype=torch.float64), 16,
                                 np.random.default_rng(3)).t
    fallback = sample_stratified(segment, 16, np.random.default_rng(3)).t
    expected, _ = torch.sort(torch.cat([coarse.t, fallback]))
    assert torch.equal(merged, expected)


def batch_of(segments, pixel_ids, slots):
    batch = SegmentBatch.from_segments(segments)
    batch.pixel_ids = np.asarray(pixel_ids)
    batch.slots = np.asarray(slots)
    return batch


@torch.no_grad()
def test_renderer_opaque_sphere_and_empty_chord():
    fields = AnalyticFields(Sphere(0.4))
    renderer = VolumeRenderer(fields, n_coarse=64, n_fine=64, jitter=True, seed=3)
    out = renderer(batch_of([x_chord(), x_chord(y=0.45)], [0, 1], [2, 2]))
    assert float(out.transmittance[0]) < 1e-3
    np.testing.assert_allclose(out.color[0].numpy(), fields.color.numpy(), atol=1e-3)
    assert float(out.transmittance[1]) > 0.999
    weights_sum = out.weights.sum(dim=-1) + out.transmittance
    np.testing.assert_allclose(weights_sum.numpy(), 1.0, atol=1e-6)


def test_renderer_samples_stay_on_the_chord():
    box = OrientedBox.axis_aligned((0.5, 0.5, 0.5))
    rng = np.random.default_rng(4)
    segments = [x_chord(*rng.uniform(-0.45, 0.45, size=2)) for _ in range(6)]
    renderer = VolumeRenderer(AnalyticFields(Sphere(0.3)), n_coarse=16, n_fine=16, seed=1)
    batch = batch_of(segments, np.arange(6), np.full(6, 2))
    t = renderer.sample(batch)
    assert t.shape == (6, 33)
    assert float(t.min()) >= 0.0 and float(t.max()) <= 1.0
    assert torch.all(t[:, 1:] >= t[:, :-1])
    for point in batch.points(t).reshape(-1, 3).numpy():
        assert contains(box, point)


@torch.no_grad()
def test_renderer_results_independent_of_batching():
    renderer = VolumeRenderer(AnalyticFields(Sphere(0.35)), n_coarse=16, n_fine=16, jitter=True, seed=5)
    rng = np.random.default_rng(6)
    segments = [x_chord(*rng.uniform(-0.4, 0.4, size=2)) for _ in range(4)]
    pixel_ids, slots = [10, 11, 12, 13], [2, 2, 5, 2]
    together = renderer(batch_of(segments, pixel_ids, slots))
    for i in range(4):
        alone = renderer(batch_of([segments[i]], [pixel_ids[i]], [slots[i]]))
        np.testing.assert_allclose(alone.color[0].numpy(), together.color[i].numpy(), atol=1e-12)
        assert float(alone.transmittance[0]) == pytest.approx(float(together.transmittance[i]), abs=1e-12)


def test_jitter_keys_depend_on_every_input():
    base = segment_keys(0, 0, np.array([1]), np.array([2]))
    assert segment_keys(1, 0, np.array([1]), np.array([2]))[0] != base[0]
    assert segment_keys(0, 1, np.array([1]), np.array([2]))[0] != base[0]
    assert segment_keys(0, 0, np.array([3]), np.array([2]))[0] != base[0]
    assert segment_keys(0, 0, np.array([1]), np.array([5]))[0] != base[0]


def test_renderer_without_jitter_uses_midpoints():
    renderer = VolumeRenderer(AnalyticFields(Sphere(0.3)), n_coarse=4, n_fine=0, jitter=False)
    t = renderer.sample(batch_of([x_chord()], [0], [2]))
    np.testing.assert_allclose(t[0].numpy(), [0.125, 0.375, 0.625, 0.875, 1.0])


def test_renderer_rejects_bad_sample_counts():
    with pytest.raises(RenderError):
        VolumeRenderer(AnalyticFields(Sphere(0.3)), n_coarse=1)
    with pytest.raises(RenderError):
        VolumeRenderer(AnalyticFields(Sphere(0.3)), n_fine=-1)
