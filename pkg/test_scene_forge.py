"""
Tests for camera sampling, the analytic oracle renderer and dataset generation.
"""
import numpy as np
import pytest
from pydantic import ValidationError

from conftest import tiny_scene_config
from field.analytic_sdf import Sphere
from forge.scene_forge import BoxConfig, SceneSpec, forge_dataset, oracle_render, sample_cameras
from render.hybrid_renderer import TraceConfig
from scene.camera import Camera, Intrinsics
from scene.geometry_core import OrientedBox
from utils.errors import DatasetError

INTRINSICS = Intrinsics(focal=10.0, cx=2.5, cy=2.5, width=5, height=5)


def make_spec(obj=None, with_box=True) -> SceneSpec:
    return SceneSpec(object=obj, box=OrientedBox.axis_aligned((0.5, 0.5, 0.5)), with_box=with_box,
                     ambient=(0.8, 0.8, 0.8), intrinsics=INTRINSICS, num_views=1,
                     camera_radius=5.0, seed=0)


@pytest.fixture
def camera():
    return Camera.look_at((5.0, 0.0, 0.0), INTRINSICS)


def sphere():
    return Sphere(0.4, albedo=(0.6, 0.6, 0.6))


def test_cameras_on_sphere_looking_at_origin():
    cameras = sample_cameras(25, 3.0, INTRINSICS, seed=7)
    assert len(cameras) == 25
    for cam in cameras:
        assert np.linalg.norm(cam.position) == pytest.approx(3.0)
        backward = cam.c2w[:3, 2]
        np.testing.assert_allclose(backward, cam.position / 3.0, atol=1e-12)


def test_camera_sampling_is_deterministic():
    a = sample_cameras(5, 2.0, INTRINSICS, seed=1)
    b = sample_cameras(5, 2.0, INTRINSICS, seed=1)
    c = sample_cameras(5, 2.0, INTRINSICS, seed=2)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.c2w, y.c2w)
    assert not np.allclose(a[0].position, c[0].position)


def test_camera_sampling_needs_a_camera():
    with pytest.raises(DatasetError):
        sample_cameras(0, 2.0, INTRINSICS, seed=0)


def test_oracle_empty_box(camera):
    image, mask = oracle_render(make_spec(), camera, TraceConfig())
    assert image.shape == (5, 5, 3) and image.dtype == np.uint8
    assert tuple(image[2, 2]) == (227, 227, 227)
    assert tuple(image[0, 0]) == (230, 230, 230)
    assert mask[2, 2] == 255 and mask[0, 0] == 0


def test_oracle_sphere_in_box(camera):
    image, mask = oracle_render(make_spec(sphere()), camera, TraceConfig())
    assert image[2, 2, 0] == 185
    # enters the box but misses the sphere
    assert mask[2, 1] == 255


def test_oracle_without_box(camera):
    image, mask = oracle_render(make_spec(sphere(), with_box=False), camera, TraceConfig())
    assert image[2, 2, 0] == 183
    assert mask[2, 2] == 255
    assert mask[2, 1] == 0
    assert image[0, 0, 0] == 230


def test_with_box_override_matches_scene_flag(camera):
    overridden, _ = oracle_render(make_spec(sphere()), camera, TraceConfig(), with_box=False)
    direct, _ = oracle_render(make_spec(sphere(), with_box=False), camera, TraceConfig())
    np.testing.assert_array_equal(overridden, direct)


def test_forge_is_deterministic(trace_config):
    a = forge_dataset(tiny_scene_config(), trace_config)
    b = forge_dataset(tiny_scene_config(), trace_config)
    np.testing.assert_array_equal(a.images, b.images)
    np.testing.assert_array_equal(a.masks, b.masks)
    assert a.num_views == 2 and a.images.shape == (2, 8, 8, 3)
    assert a.masks.any()
    assert a.object_spec["type"] == "sphere"
    assert a.generator_config["scene"]["num_views"] == 2


def test_forge_companion_without_box(trace_config):
    dataset = forge_dataset(tiny_scene_config(render_without_box_companion=True), trace_config)
    companion = dataset.companion
    assert companion is not None and not companion.with_box
    for x, y in zip(dataset.cameras, companion.cameras):
        np.testing.assert_array_equal(x.c2w, y.c2w)
    # the object sits inside the box, so its silhouette lies inside the box's
    assert not (companion.masks & ~dataset.masks).any()


def test_no_companion_for_boxless_scene(trace_config):
    dataset = forge_dataset(tiny_scene_config(with_box=False, render_without_box_companion=True),
                            trace_config)
    assert dataset.companion is None


def test_object_outside_box_rejected(trace_config):
    cfg = tiny_scene_config(object={"type": "sphere", "radius": 0.6})
    with pytest.raises(DatasetError):
        forge_dataset(cfg, trace_config)


def test_box_outside_unit_sphere_rejected(trace_config):
    cfg = tiny_scene_config(box=BoxConfig(half_extents=(0.7, 0.7, 0.7)))
    with pytest.raises(DatasetError):
        SceneSpec.from_config(cfg, trace_config)


def test_unknown_object_type_rejected():
    with pytest.raises(ValidationError):
        tiny_scene_config(object={"type": "teapot"})
