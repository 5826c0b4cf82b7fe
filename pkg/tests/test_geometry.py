import math

import numpy as np
import pytest

from asee_sim.geometry import (
    PointCloud,
    RigidTransform,
    Twist,
    adjoint_map,
    angle_between,
    compose,
    load_ply,
    save_ply,
    skew,
    transform_cloud,
    unit,
)


def random_transform(rng):
    axis = rng.normal(size=3)
    angle = rng.uniform(-np.pi, np.pi)
    t = rng.normal(size=3)
    return RigidTransform.from_axis_angle(axis, angle, t)


# ---------------------------------------------------------------------------
# rigid transforms

def test_identity_leaves_points_alone():
    p = np.array([0.3, -0.2, 1.5])
    assert np.allclose(RigidTransform.identity().apply(p), p)


def test_compose_matches_matrix_product():
    # oracle: 4x4 homogeneous matrix product
    rng = np.random.default_rng(11)
    for _ in range(50):
        a = random_transform(rng)
        b = random_transform(rng)
        got = compose(a, b).matrix()
        want = a.matrix() @ b.matrix()
        assert np.allclose(got, want, atol=1e-12)


def test_compose_operator_alias():
    rng = np.random.default_rng(12)
    a = random_transform(rng)
    b = random_transform(rng)
    assert np.allclose((a @ b).matrix(), compose(a, b).matrix())


def test_inverse_round_trip():
    rng = np.random.default_rng(13)
    for _ in range(50):
        T = random_transform(rng)
        M = compose(T, T.inverse()).matrix()
        assert np.allclose(M, np.eye(4), atol=1e-12)


def test_apply_matches_homogeneous_matrix():
    rng = np.random.default_rng(14)
    T = random_transform(rng)
    pts = rng.normal(size=(40, 3))
    hom = np.hstack([pts, np.ones((40, 1))])
    want = (T.matrix() @ hom.T).T[:, :3]
    assert np.allclose(T.apply(pts), want, atol=1e-12)


def test_rotation_is_orthonormal():
    rng = np.random.default_rng(15)
    for _ in range(20):
        R = random_transform(rng).rotation()
        assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.isclose(np.linalg.det(R), 1.0)


def test_from_matrix_round_trip():
    rng = np.random.default_rng(16)
    for _ in range(50):
        T = random_transform(rng)
        U = RigidTransform.from_matrix(T.matrix())
        assert np.allclose(U.matrix(), T.matrix(), atol=1e-12)


def test_transform_preserves_distances():
    rng = np.random.default_rng(17)
    T = random_transform(rng)
    a = rng.normal(size=3)
    b = rng.normal(size=3)
    da = np.linalg.norm(T.apply(a) - T.apply(b))
    assert np.isclose(da, np.linalg.norm(a - b))


def test_axis_angle_quarter_turn():
    T = RigidTransform.from_axis_angle([0, 0, 1], math.pi / 2)
    assert np.allclose(T.apply([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)


def test_zero_axis_rejected():
    with pytest.raises(ValueError):
        RigidTransform.from_axis_angle([0, 0, 0], 0.3)


# ---------------------------------------------------------------------------
# skew / adjoint

def test_skew_reproduces_cross_product():
    rng = np.random.default_rng(18)
    for _ in range(20):
        a = rng.normal(size=3)
        b = rng.normal(size=3)
        assert np.allclose(skew(a) @ b, np.cross(a, b), atol=1e-12)


def test_skew_antisymmetric():
    S = skew([0.1, -0.4, 2.0])
    assert np.allclose(S, -S.T)


def test_adjoint_identity_transform_is_identity_map():
    tw = Twist([0.1, 0.2, 0.3], [-0.1, 0.0, 0.4])
    out = adjoint_map(RigidTransform.identity(), tw)
    assert np.allclose(out.as_vector(), tw.as_vector())


def test_adjoint_pure_translation_adds_lever_arm():
    # v' = v + p x w for R = I
    T = RigidTransform(t=np.array([1.0, 0.0, 0.0]))
    tw = Twist([0.0, 0.0, 0.0], [0.0, 0.0, 1.0])
    out = adjoint_map(T, tw)
    assert np.allclose(out.angular, [0.0, 0.0, 1.0])
    assert np.allclose(out.linear, np.cross([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]))


def test_adjoint_matches_block_matrix_oracle():
    rng = np.random.default_rng(19)
    for _ in range(30):
        T = random_transform(rng)
        tw = Twist(rng.normal(size=3), rng.normal(size=3))
        R = T.rotation()
        Ad = np.zeros((6, 6))
        Ad[:3, :3] = R
        Ad[:3, 3:] = skew(T.t) @ R
        Ad[3:, 3:] = R
        want = Ad @ tw.as_vector()
        got = adjoint_map(T, tw).as_vector()
        assert np.allclose(got, want, atol=1e-12)


def test_adjoint_composes():
    rng = np.random.default_rng(20)
    a = random_transform(rng)
    b = random_transform(rng)
    tw = Twist(rng.normal(size=3), rng.normal(size=3))
    via_two = adjoint_map(a, adjoint_map(b, tw))
    direct = adjoint_map(compose(a, b), tw)
    assert np.allclose(via_two.as_vector(), direct.as_vector(), atol=1e-10)


# ---------------------------------------------------------------------------
# angles

def test_angle_between_axes():
    assert np.isclose(angle_between([1, 0, 0], [0, 1, 0]), 90.0)
    assert np.isclose(angle_between([1, 0, 0], [1, 0, 0]), 0.0)
    assert np.isclose(angle_between([1, 0, 0], [-1, 0, 0]), 180.0)


def test_angle_between_scale_invariant_and_symmetric():
    rng = np.random.default_rng(21)
    for _ in range(20):
        a = rng.normal(size=3)
        b = rng.normal(size=3)
        assert np.isclose(angle_between(a, b), angle_between(b, a))
        assert np.isclose(angle_between(3.7 * a, b), angle_between(a, 0.2 * b))


def test_angle_between_rejects_zero():
    with pytest.raises(ValueError):
        angle_between([0, 0, 0], [1, 0, 0])


def test_unit_normalizes():
    assert np.allclose(unit([0, 0, 2.0]), [0, 0, 1.0])
    with pytest.raises(ValueError):
        unit([0.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# point clouds and PLY round trip

def test_transform_cloud_rotates_normals_without_translation():
    rng = np.random.default_rng(22)
    T = random_transform(rng)
    pts = rng.normal(size=(25, 3))
    nrm = rng.normal(size=(25, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    out = transform_cloud(T, PointCloud(pts, nrm))
    assert np.allclose(out.points, T.apply(pts))
    assert np.allclose(out.normals, nrm @ T.rotation().T)
    # rotated normals stay unit length
    assert np.allclose(np.linalg.norm(out.normals, axis=1), 1.0)


def test_ply_round_trip_exact(tmp_path):
    rng = np.random.default_rng(23)
    pts = rng.normal(size=(17, 3))
    nrm = rng.normal(size=(17, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    cloud = PointCloud(pts, nrm)
    path = tmp_path / "c.ply"
    save_ply(cloud, path)
    back = load_ply(path)
    assert np.array_equal(back.points, pts)
    assert np.array_equal(back.normals, nrm)


def test_ply_without_normals(tmp_path):
    pts = np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]])
    path = tmp_path / "p.ply"
    save_ply(PointCloud(pts), path)
    back = load_ply(path)
    assert back.normals is None
    assert np.array_equal(back.points, pts)


def test_ply_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_text("not a ply\n1 2 3\n")
    with pytest.raises(ValueError):
        load_ply(path)


def test_cloud_select_mask():
    pts = np.arange(12, dtype=float).reshape(4, 3)
    c = PointCloud(pts, frame_id="probe")
    sub = c.select(np.array([True, False, True, False]))
    assert len(sub) == 2
    assert sub.frame_id == "probe"
    assert np.array_equal(sub.points, pts[[0, 2]])
