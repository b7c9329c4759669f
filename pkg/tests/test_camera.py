import numpy as np
import pytest

from curverope.camera import (
    Ray,
    RigidTransform,
    UcmCamera,
    lift_point,
    project_points,
    relative_transform,
    ucm_project,
    ucm_unproject,
    unproject_points,
)

from util import oracle_project, random_camera, random_rotation


def test_unproject_center_pinhole():
    cam = UcmCamera(100, 100, 50, 50, 0.0, 100, 100)
    ray = ucm_unproject(cam, (50, 50))
    assert np.allclose(ray.direction, [0, 0, 1], atol=1e-15)


def test_unproject_pinhole_45deg():
    cam = UcmCamera(100, 100, 50, 50, 0.0, 100, 100)
    ray = ucm_unproject(cam, (150, 50))
    s = 1 / np.sqrt(2)
    assert np.allclose(ray.direction, [s, 0, s], atol=1e-15)


def test_unproject_center_full_distortion():
    cam = UcmCamera(100, 100, 50, 50, 1.0, 100, 100)
    ray = ucm_unproject(cam, (50, 50))
    assert np.allclose(ray.direction, [0, 0, 1], atol=1e-15)


def test_project_on_axis():
    cam = UcmCamera(100, 100, 50, 50, 0.0, 100, 100)
    assert np.allclose(ucm_project(cam, (0, 0, 2)), [50, 50], atol=1e-15)


def test_project_full_distortion():
    cam = UcmCamera(100, 100, 0, 0, 1.0, 100, 100)
    px = ucm_project(cam, (1, 0, 1))
    assert np.allclose(px, [100 * (np.sqrt(2) - 1), 0], atol=1e-12)


def test_roundtrip_random():
    rng = np.random.default_rng(1)
    for _ in range(100):
        cam = random_camera(rng)
        pixels = np.stack(
            [rng.uniform(0, cam.width, 100), rng.uniform(0, cam.height, 100)], axis=1
        )
        radii = rng.uniform(0.1, 50.0, 100)
        dirs = unproject_points(cam, pixels)
        back = project_points(cam, radii[:, None] * dirs)
        assert np.max(np.abs(back - pixels)) < 1e-6


def test_unprojected_rays_unit_norm():
    rng = np.random.default_rng(2)
    cam = random_camera(rng)
    pixels = np.stack([rng.uniform(0, 64, 500), rng.uniform(0, 64, 500)], axis=1)
    dirs = unproject_points(cam, pixels)
    assert np.max(np.abs(np.linalg.norm(dirs, axis=1) - 1.0)) < 1e-12


def test_pinhole_equivalence():
    rng = np.random.default_rng(3)
    cam = random_camera(rng, xi=0.0)
    pixels = np.stack([rng.uniform(-20, 90, 200), rng.uniform(-20, 90, 200)], axis=1)
    dirs = unproject_points(cam, pixels)
    x = (pixels[:, 0] - cam.cx) / cam.fx
    y = (pixels[:, 1] - cam.cy) / cam.fy
    naive = np.stack([x, y, np.ones_like(x)], axis=1)
    naive /= np.linalg.norm(naive, axis=1, keepdims=True)
    assert np.max(np.abs(dirs - naive)) < 1e-12
    assert np.all(dirs[:, 2] > 0)


def test_project_matches_scalar_oracle():
    rng = np.random.default_rng(4)
    for _ in range(50):
        cam = random_camera(rng)
        point = rng.uniform(-2, 2, 3) + [0, 0, 2.5]
        assert np.allclose(ucm_project(cam, point), oracle_project(cam, point), atol=1e-10)


def test_relative_transform_identity():
    rng = np.random.default_rng(5)
    pose = RigidTransform(random_rotation(rng), rng.normal(size=3))
    rel = relative_transform(pose, pose)
    assert np.allclose(rel.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(rel.translation, 0, atol=1e-12)


def test_relative_transform_pure_translation():
    t = np.array([1.0, -2.0, 0.5])
    rel = relative_transform(RigidTransform.identity(), RigidTransform(np.eye(3), t))
    assert np.allclose(rel.rotation, np.eye(3))
    assert np.allclose(rel.translation, -t)


def test_relative_transform_against_world_frame():
    rng = np.random.default_rng(6)
    for _ in range(20):
        ps = RigidTransform(random_rotation(rng), rng.normal(size=3))
        pq = RigidTransform(random_rotation(rng), rng.normal(size=3))
        rel = relative_transform(ps, pq)
        point_s = rng.normal(size=3)
        world = ps.rotation @ point_s + ps.translation
        in_query = pq.rotation.T @ (world - pq.translation)
        assert np.allclose(rel.apply(point_s), in_query, atol=1e-10)


def test_lift_point():
    ray = Ray(np.array([0.0, 0.0, 1.0]))
    assert np.allclose(lift_point(ray, 2.0), [0, 0, 2])
    assert np.allclose(lift_point(ray, 1.0), ray.direction)
    rng = np.random.default_rng(7)
    for _ in range(20):
        d = rng.normal(size=3)
        ray = Ray(d / np.linalg.norm(d))
        r = rng.uniform(0.01, 100)
        assert np.isclose(np.linalg.norm(lift_point(ray, r)), r)


def test_input_errors():
    cam = UcmCamera(100, 100, 50, 50, 0.5, 100, 100)
    with pytest.raises(ValueError):
        ucm_unproject(cam, (np.nan, 10))
    with pytest.raises(ValueError):
        ucm_project(cam, (0, 0, 0))
    with pytest.raises(ValueError):
        lift_point(Ray(np.array([0.0, 0.0, 1.0])), -1.0)
    with pytest.raises(ValueError):
        lift_point(Ray(np.array([0.0, 0.0, 1.0])), 0.0)


def test_construction_errors():
    with pytest.raises(ValueError):
        UcmCamera(100, 100, 50, 50, 1.2, 100, 100)
    with pytest.raises(ValueError):
        UcmCamera(100, 100, 50, 50, -0.1, 100, 100)
    with pytest.raises(ValueError):
        UcmCamera(-1, 100, 50, 50, 0.5, 100, 100)
    with pytest.raises(ValueError):
        UcmCamera(100, 100, 50, 50, 0.5, 0, 100)
    with pytest.raises(ValueError):
        Ray(np.array([0.0, 0.0, 2.0]))
    bad = np.eye(3)
    bad[0, 0] = 1.0 + 1e-6
    with pytest.raises(ValueError):
        RigidTransform(bad, np.zeros(3))


def test_rigid_transform_inverse():
    rng = np.random.default_rng(8)
    pose = RigidTransform(random_rotation(rng), rng.normal(size=3))
    pts = rng.normal(size=(10, 3))
    assert np.allclose(pose.inverse().apply(pose.apply(pts)), pts, atol=1e-12)
