"""
Tests for ray / oriented-box geometry.
"""
import math

import numpy as np
import pytest

from scene.geometry_core import (EPS_GEO, OrientedBox, Ray, contains, intersect_ray_box,
                                 normalize, rotation_from_axis_angle, surface_normal, vec3)
from utils.errors import GeometryError


@pytest.fixture
def unit_box():
    return OrientedBox.axis_aligned((1.0, 1.0, 1.0))


def random_rotation(rng):
    return rotation_from_axis_angle(rng.normal(size=3), rng.uniform(0.0, 2.0 * math.pi))


def test_intersect_head_on(unit_box):
    hit = intersect_ray_box(Ray(vec3(0, 0, 5), vec3(0, 0, -1)), unit_box)
    assert hit is not None
    assert hit.t_enter == pytest.approx(4.0, abs=1e-12)
    assert hit.t_exit == pytest.approx(6.0, abs=1e-12)
    np.testing.assert_allclose(hit.normal_enter, [0, 0, 1])
    np.testing.assert_allclose(hit.normal_exit, [0, 0, -1])


def test_parallel_ray_outside_slab_misses(unit_box):
    assert intersect_ray_box(Ray(vec3(0, 0, 5), vec3(0, 1, 0)), unit_box) is None


def test_origin_inside_gives_negative_enter(unit_box):
    hit = intersect_ray_box(Ray(vec3(0, 0, 0), vec3(1, 0, 0)), unit_box)
    assert hit.t_enter == pytest.approx(-1.0)
    assert hit.t_exit == pytest.approx(1.0)


def test_box_behind_origin_is_a_miss(unit_box):
    assert intersect_ray_box(Ray(vec3(0, 0, 5), vec3(0, 0, 1)), unit_box) is None


def test_surface_normal_face_center(unit_box):
    np.testing.assert_allclose(surface_normal(unit_box, vec3(0, 0, 1)), [0, 0, 1])


def test_surface_normal_rotated_box():
    box = OrientedBox(center=(0, 0, 0), rotation=rotation_from_axis_angle((0, 0, 1), math.pi / 2),
                      half_extents=(1.0, 2.0, 3.0))
    # local +x face maps to world +y
    np.testing.assert_allclose(surface_normal(box, vec3(0, 1, 0)), [0, 1, 0], atol=1e-12)


def test_surface_normal_edge_tie_break(unit_box):
    np.testing.assert_allclose(surface_normal(unit_box, vec3(1, 1, 0)), [1, 0, 0])


@pytest.mark.parametrize("point", [(0, 0, 0), (0, 0, 1.5), (0.5, 0.5, 1.0 - 10 * EPS_GEO)])
def test_surface_normal_off_surface_raises(unit_box, point):
    with pytest.raises(GeometryError, match="not on surface"):
        surface_normal(unit_box, vec3(*point))


def test_contains(unit_box):
    assert contains(unit_box, vec3(0, 0, 0))
    assert contains(unit_box, vec3(0, 0, 1))
    assert not contains(unit_box, vec3(0, 0, 1.0001))


def test_contains_rotated_box():
    rotation = rotation_from_axis_angle((1, 2, 3), 0.7)
    box = OrientedBox(center=(0.1, -0.2, 0.05), rotation=rotation, half_extents=(0.3, 0.4, 0.5))
    point = box.center + rotation @ (0.999 * box.half_extents)
    assert contains(box, point)


@pytest.mark.parametrize("kwargs", [
    {"rotation": np.diag([1.0, 1.0, -1.0])},
    {"rotation": np.array([[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])},
    {"half_extents": (1.0, 0.0, 1.0)},
    {"ior": 1.0},
    {"ior": 3.5},
])
def test_invalid_box_rejected(kwargs):
    params = {"center": (0, 0, 0), "rotation": np.eye(3), "half_extents": (1, 1, 1), "ior": 1.45}
    params.update(kwargs)
    with pytest.raises(GeometryError):
        OrientedBox(**params)


def test_non_unit_ray_rejected():
    with pytest.raises(GeometryError):
        Ray(vec3(0, 0, 0), vec3(0, 0, 2))


def test_box_dict_round_trip():
    box = OrientedBox(center=(0.1, 0.2, 0.3), rotation=rotation_from_axis_angle((0, 1, 0), 0.3),
                      half_extents=(0.4, 0.5, 0.6), ior=1.5)
    again = OrientedBox.from_dict(box.to_dict())
    np.testing.assert_array_equal(again.rotation, box.rotation)
    np.testing.assert_array_equal(again.center, box.center)
    assert again.ior == box.ior


def test_hit_points_lie_on_faces():
    rng = np.random.default_rng(1)
    box = OrientedBox(center=(0.05, 0.0, -0.1), rotation=random_rotation(rng), half_extents=(0.5, 0.4, 0.3))
    for _ in range(200):
        origin = normalize(rng.normal(size=3)) * 3.0
        ray = Ray(origin, normalize(rng.normal(scale=0.2, size=3) - origin))
        hit = intersect_ray_box(ray, box)
        if hit is None:
            continue
        np.testing.assert_allclose(surface_normal(box, ray.at(hit.t_enter)), hit.normal_enter, atol=1e-9)
        np.testing.assert_allclose(surface_normal(box, ray.at(hit.t_exit)), hit.normal_exit, atol=1e-9)


def test_rotation_invariance():
    rng = np.random.default_rng(2)
    aligned = OrientedBox.axis_aligned((0.5, 0.3, 0.4))
    for _ in range(100):
        rotation = random_rotation(rng)
        rotated = OrientedBox(center=(0, 0, 0), rotation=rotation, half_extents=aligned.half_extents)
        origin = normalize(rng.normal(size=3)) * 2.0
        direction = normalize(rng.normal(scale=0.2, size=3) - origin)
        plain = intersect_ray_box(Ray(origin, direction), aligned)
        turned = intersect_ray_box(Ray(rotation @ origin, rotation @ direction), rotated)
        assert (plain is None) == (turned is None)
        if plain is not None:
            assert turned.t_enter == pytest.approx(plain.t_enter, abs=1e-9)
            assert turned.t_exit == pytest.approx(plain.t_exit, abs=1e-9)


def test_points_between_crossings_are_inside():
    rng = np.random.default_rng(3)
    box = OrientedBox(center=(0, 0, 0), rotation=random_rotation(rng), half_extents=(0.5, 0.5, 0.25))
    checked = 0
    for _ in range(300):
        origin = normalize(rng.normal(size=3)) * 4.0
        ray = Ray(origin, normalize(rng.normal(scale=0.3, size=3) - origin))
        hit = intersect_ray_box(ray, box)
        if hit is None:
            continue
        for t in np.linspace(hit.t_enter, hit.t_exit, 12)[1:-1]:
            assert contains(box, ray.at(t))
        checked += 1
    assert checked > 50


def test_world_bounds_of_rotated_box():
    box = OrientedBox(center=(0, 0, 0), rotation=rotation_from_axis_angle((0, 0, 1), math.pi / 4),
                      half_extents=(0.5, 0.5, 0.5))
    bounds = box.world_bounds()
    np.testing.assert_allclose(bounds[1], [math.sqrt(0.5), math.sqrt(0.5), 0.5], atol=1e-12)
