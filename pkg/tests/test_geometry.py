import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from artifact import geometry as geo
from artifact.geometry import CameraPose

from .conftest import random_pose, random_poses


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def pose(R=None, t=(0, 0, 0), **kw):
    args = dict(fx=10.0, fy=10.0, cx=4.0, cy=3.0, width=8, height=6)
    args.update(kw)
    return CameraPose(R=np.eye(3) if R is None else R, t=np.asarray(t, float), **args)


def test_geodesic_trivial():
    assert geo.so3_geodesic(np.eye(3), np.eye(3)) == 0.0
    assert geo.so3_geodesic(np.eye(3), rot_z(np.pi)) == pytest.approx(np.pi, abs=1e-12)


def test_geodesic_matches_quaternion_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        qa, qb = Rotation.random(2, random_state=rng).as_quat()
        oracle = 2 * np.arccos(np.clip(abs(np.dot(qa, qb)), 0, 1))
        Ra = Rotation.from_quat(qa).as_matrix()
        Rb = Rotation.from_quat(qb).as_matrix()
        assert geo.so3_geodesic(Ra, Rb) == pytest.approx(oracle, abs=1e-9)


def test_geodesic_rejects_non_rotation():
    with pytest.raises(geo.PoseError):
        geo.so3_geodesic(np.eye(3), np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(geo.PoseError):
        geo.so3_geodesic(np.eye(3) * 2, np.eye(3))


def test_pose_distance_trivial():
    p = pose()
    assert geo.pose_distance(p, p, 1.0, 1.0) == 0.0
    assert geo.pose_distance(p, pose(R=rot_z(np.pi)), 1.0, 1.0) == pytest.approx(1.0)


def test_pose_distance_rejects_nonpositive_radius():
    with pytest.raises(geo.PoseError):
        geo.pose_distance(pose(), pose(), 1.0, 0.0)


def _oracle_distance(a, b, rbar):
    # independent re-evaluation: angle from the axis-angle vector
    ang = np.linalg.norm(Rotation.from_matrix(a.R.T @ b.R).as_rotvec())
    return ang / np.pi + np.sqrt(np.sum((a.t - b.t) ** 2)) / rbar


def test_pose_distance_matrix_matches_oracle():
    poses = random_poses(3, 6)
    rbar = sum(np.sqrt(np.sum(p.t**2)) for p in poses) / len(poses)
    for a in poses:
        for b in poses:
            assert geo.pose_distance(a, b, 1.0, rbar) == pytest.approx(_oracle_distance(a, b, rbar), abs=1e-9)


def test_pose_distance_symmetric_and_positive():
    poses = random_poses(4, 8)
    for a in poses:
        for b in poses:
            assert geo.pose_distance(a, b, 1.0, 2.0) == geo.pose_distance(b, a, 1.0, 2.0)
            if a is not b:
                assert geo.pose_distance(a, b, 1.0, 2.0) > 0


def test_mean_radius():
    assert geo.mean_radius([pose(), pose()]) == 0.0
    assert geo.mean_radius([pose(t=(1, 0, 0)), pose(t=(0, 3, 0))]) == 2.0
    poses = random_poses(5, 20)
    total = 0.0
    for p in poses:
        total += float(np.sqrt(p.t[0] ** 2 + p.t[1] ** 2 + p.t[2] ** 2))
    assert geo.mean_radius(poses) == pytest.approx(total / 20, rel=1e-15)
    with pytest.raises(geo.PoseError):
        geo.mean_radius([])


def test_make_distance_degenerate_radius_falls_back():
    d = geo.make_distance([pose(), pose()])
    assert d(pose(), pose(t=(0, 0, 2))) == pytest.approx(2.0)


def test_frobenius_variant():
    a, b = pose(), pose(R=rot_z(np.pi / 2), t=(3, 4, 0))
    assert geo.frobenius_distance(a, b) == pytest.approx(np.linalg.norm(np.eye(3) - rot_z(np.pi / 2)) + 5)


def test_raymap_on_axis_pixel():
    p = pose(fx=10.0, fy=10.0, cx=4.5, cy=3.5)
    rm = geo.plucker_raymap(p)
    assert rm.shape == (6, 8, 6)
    np.testing.assert_allclose(rm[3, 4], [0, 0, 1, 0, 0, 0], atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_raymap_invariants(seed):
    p = random_pose(np.random.default_rng(seed))
    rm = geo.plucker_raymap(p)
    d, m = rm[..., :3], rm[..., 3:]
    assert np.abs(np.linalg.norm(d, axis=-1) - 1).max() <= 1e-9
    assert np.abs(np.sum(d * m, axis=-1)).max() <= 1e-12


def test_raymap_matches_matrix_inverse_unprojection():
    rng = np.random.default_rng(11)
    p = random_pose(rng)
    K = np.array([[p.fx, 0, p.cx], [0, p.fy, p.cy], [0, 0, 1.0]])
    c2w = np.eye(4)
    c2w[:3, :3], c2w[:3, 3] = p.R, p.t
    w2c = np.linalg.inv(c2w)
    rm = geo.plucker_raymap(p)
    for _ in range(10):
        u, v = rng.integers(0, p.width), rng.integers(0, p.height)
        cam = np.linalg.inv(K) @ np.array([u + 0.5, v + 0.5, 1.0])
        # point at depth 1 and the camera centre, both recovered through the inverse of w2c
        inv = np.linalg.inv(w2c)
        far = (inv @ np.append(cam, 1.0))[:3]
        origin = (inv @ np.array([0, 0, 0, 1.0]))[:3]
        d = (far - origin) / np.linalg.norm(far - origin)
        np.testing.assert_allclose(rm[v, u, :3], d, atol=1e-12)
        np.testing.assert_allclose(rm[v, u, 3:], np.cross(origin, d), atol=1e-12)


def test_raymap_translation_equivariance():
    rng = np.random.default_rng(12)
    p = random_pose(rng)
    delta = rng.standard_normal(3)
    a = geo.plucker_raymap(p)
    b = geo.plucker_raymap(p.translated(delta))
    np.testing.assert_array_equal(a[..., :3], b[..., :3])
    np.testing.assert_allclose(b[..., 3:] - a[..., 3:], np.cross(delta, a[..., :3]), atol=1e-12)


def test_look_at_faces_target():
    R = geo.look_at([0, 0, -3], [0, 0, 0])
    np.testing.assert_allclose(R[:, 2], [0, 0, 1], atol=1e-12)
    geo.check_rotation(R)


def test_camera_pose_validation():
    with pytest.raises(geo.PoseError):
        pose(fx=-1.0)
    with pytest.raises(geo.PoseError):
        pose(width=0)


def test_manifest_round_trip(tmp_path):
    poses = random_poses(6, 3)
    geo.save_manifest(tmp_path / "p.json", poses)
    back = geo.load_manifest(tmp_path / "p.json")
    raw = json.loads((tmp_path / "p.json").read_text())
    assert set(raw[0]) == {"R", "t", "fx", "fy", "cx", "cy", "width", "height"}
    assert len(raw[0]["R"]) == 9
    for a, b in zip(poses, back):
        np.testing.assert_array_equal(a.R, b.R)
        np.testing.assert_array_equal(a.t, b.t)
