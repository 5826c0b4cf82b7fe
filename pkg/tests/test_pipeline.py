import math

import numpy as np
import pytest

from asee_sim.camera import PlaneSurface, SphereSurface, render_rig, PinholeIntrinsics
from asee_sim.geometry import RigidTransform, angle_between, compose, unit, PointCloud
from asee_sim.pipeline import (
    Box,
    MovingAverageFilter,
    NoSupportError,
    NormalEstimate,
    PipelineConfig,
    RigExtrinsics,
    box_crop_probe,
    cap_points,
    crop_z,
    fuse,
    local_normals,
    region_normal,
    run_pipeline,
    smooth,
    statistical_outlier_removal,
    voxel_downsample,
)
from oracles import box_crop_brute, crop_z_brute, sor_brute, voxel_brute

INTR = PinholeIntrinsics.default()


def default_extrinsics(lateral=0.06, back=0.15, pitch_deg=25.0) -> RigExtrinsics:
    """Probe-frame camera mounts: one camera each side, pitched toward the axis."""
    pitch = math.radians(pitch_deg)
    cam1_to_probe = RigidTransform.from_axis_angle([0, 1, 0], +pitch, t=(-lateral, 0, -back))
    cam2_to_probe = RigidTransform.from_axis_angle([0, 1, 0], -pitch, t=(+lateral, 0, -back))
    return RigExtrinsics(cam2_to_cam1=compose(cam1_to_probe.inverse(), cam2_to_probe),
                         cam1_to_probe=cam1_to_probe)


def render_for_probe(surface, extr: RigExtrinsics, noise=0.0, seed=0,
                     probe_pose=RigidTransform.identity()):
    """Render both rig cameras with the probe at the given world pose."""
    cam1_world = compose(probe_pose, extr.cam1_to_probe)
    return render_rig(surface, cam1_world, extr.cam2_to_cam1, INTR, noise, seed)


# ---------------------------------------------------------------------------
# crop_z

def test_crop_keeps_in_range_point_only():
    c = PointCloud(np.array([[0, 0, 0.01], [0, 0, 0.10], [0, 0, 0.30]]))
    out = crop_z(c, (0.02, 0.25))
    assert len(out) == 1 and out.points[0, 2] == 0.10


def test_crop_empty_cloud():
    assert len(crop_z(PointCloud.empty(), (0.02, 0.25))) == 0


def test_crop_matches_brute_force():
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 0.5, size=(1000, 3))
    out = crop_z(PointCloud(pts), (0.02, 0.25))
    assert np.array_equal(out.points, crop_z_brute(pts, 0.02, 0.25))


def test_crop_rejects_bad_range():
    with pytest.raises(ValueError):
        crop_z(PointCloud.empty(), (0.25, 0.02))


# ---------------------------------------------------------------------------
# cap_points

def test_cap_under_limit_unchanged():
    c = PointCloud(np.random.default_rng(2).normal(size=(100, 3)))
    assert cap_points(c, 35000, seed=5) is c


def test_cap_over_limit_uniform_members():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(70000, 3))
    out = cap_points(PointCloud(pts), 35000, seed=5)
    assert len(out) == 35000
    # every output row must be an input row (indices subset)
    src = {tuple(p) for p in pts[::7]}  # spot-check a slice for speed
    hit = sum(tuple(p) in src for p in out.points[::7])
    assert hit > 0
    full_src = pts.view([("x", float), ("y", float), ("z", float)]).ravel()
    full_out = out.points.view([("x", float), ("y", float), ("z", float)]).ravel()
    assert np.isin(full_out, full_src).all()


def test_cap_deterministic():
    pts = np.random.default_rng(4).normal(size=(5000, 3))
    a = cap_points(PointCloud(pts), 100, seed=9)
    b = cap_points(PointCloud(pts), 100, seed=9)
    c = cap_points(PointCloud(pts), 100, seed=10)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


# ---------------------------------------------------------------------------
# fuse

def test_fuse_empty_second_cloud():
    c1 = PointCloud(np.random.default_rng(5).normal(size=(10, 3)))
    out = fuse(c1, PointCloud.empty(), RigidTransform.identity())
    assert np.array_equal(out.points, c1.points)


def test_fuse_identity_concatenates():
    a = PointCloud(np.array([[1.0, 0, 0]]))
    b = PointCloud(np.array([[0, 1.0, 0]]))
    out = fuse(a, b, RigidTransform.identity())
    assert np.array_equal(out.points, np.array([[1.0, 0, 0], [0, 1.0, 0]]))


def test_fuse_two_renders_land_on_plane():
    extr = default_extrinsics()
    plane = PlaneSurface([0, 0, 0.08], [0, 0, -1])
    c1, c2 = render_for_probe(plane, extr)
    fused = fuse(c1, c2, extr.cam2_to_cam1)
    assert len(fused) == len(c1) + len(c2)
    world = compose(RigidTransform.identity(), extr.cam1_to_probe).apply(fused.points)
    assert np.max(np.abs(world[:, 2] - 0.08)) < 1e-9


# ---------------------------------------------------------------------------
# box_crop_probe

def test_box_crop_no_points_inside():
    pts = np.array([[0.5, 0.5, 0.5], [1.0, 0, 0]])
    box = Box((-0.1, -0.1, -0.1), (0.1, 0.1, 0.1))
    out = box_crop_probe(PointCloud(pts), box, RigidTransform.identity())
    assert np.array_equal(out.points, pts)


def test_box_crop_all_inside():
    pts = np.zeros((5, 3))
    box = Box((-0.1, -0.1, -0.1), (0.1, 0.1, 0.1))
    assert len(box_crop_probe(PointCloud(pts), box, RigidTransform.identity())) == 0


def test_box_crop_matches_brute_force():
    rng = np.random.default_rng(6)
    pts = rng.uniform(-0.2, 0.2, size=(800, 3))
    T = RigidTransform.from_axis_angle(rng.normal(size=3), 0.7, t=rng.normal(size=3) * 0.05)
    box = Box((-0.05, -0.08, -0.1), (0.06, 0.04, 0.12))
    out = box_crop_probe(PointCloud(pts), box, T)
    want = box_crop_brute(pts, box.lo, box.hi, T.matrix())
    assert np.array_equal(out.points, want)


# ---------------------------------------------------------------------------
# voxel_downsample

def test_voxel_merges_to_midpoint():
    pts = np.array([[0.0011, 0.0011, 0.0011], [0.0021, 0.0011, 0.0011]])
    out = voxel_downsample(PointCloud(pts), 0.005)
    assert len(out) == 1
    assert np.allclose(out.points[0], pts.mean(axis=0))


def test_voxel_preserves_separated_points():
    pts = np.column_stack([np.arange(10) * 0.010 + 0.001, np.zeros(10), np.zeros(10)])
    out = voxel_downsample(PointCloud(pts), 0.005)
    assert len(out) == 10


def test_voxel_matches_brute_force_exactly():
    rng = np.random.default_rng(7)
    pts = rng.uniform(-0.3, 0.3, size=(500, 3))
    out = voxel_downsample(PointCloud(pts), 0.01)
    assert np.array_equal(out.points, voxel_brute(pts, 0.01))


# ---------------------------------------------------------------------------
# statistical_outlier_removal

def grid_plus_outlier():
    xs, ys = np.meshgrid(np.arange(10) * 0.005, np.arange(10) * 0.005)
    grid = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(100)])
    return np.vstack([grid, [[0.5, 0.5, 0.0]]])


def test_sor_removes_exactly_the_far_point():
    pts = grid_plus_outlier()
    out = statistical_outlier_removal(PointCloud(pts), k=8, std_mult=2.0)
    assert len(out) == 100
    assert np.array_equal(out.points, pts[:100])


def test_sor_generous_threshold_removes_nothing():
    pts = grid_plus_outlier()[:100]
    out = statistical_outlier_removal(PointCloud(pts), k=8, std_mult=10.0)
    assert len(out) == 100


def test_sor_rerun_matches_rerun_oracle():
    # second application on the cleaned grid behaves exactly like the oracle
    # (corner points sit above mean + 2*std of the tight remaining spread)
    pts = grid_plus_outlier()
    once = statistical_outlier_removal(PointCloud(pts), k=8, std_mult=2.0)
    twice = statistical_outlier_removal(once, k=8, std_mult=2.0)
    assert np.array_equal(once.points, sor_brute(pts, 8, 2.0))
    assert np.array_equal(twice.points, sor_brute(once.points, 8, 2.0))


def test_sor_matches_brute_force_exactly():
    rng = np.random.default_rng(8)
    pts = rng.uniform(-0.1, 0.1, size=(400, 3))
    pts[::37] += 0.3  # sprinkle outliers
    out = statistical_outlier_removal(PointCloud(pts), k=20, std_mult=2.0)
    assert np.array_equal(out.points, sor_brute(pts, 20, 2.0))


def test_sor_needs_more_points_than_k():
    with pytest.raises(ValueError):
        statistical_outlier_removal(PointCloud(np.zeros((5, 3))), k=8)


# ---------------------------------------------------------------------------
# local_normals

def test_plane_normals_are_vertical():
    rng = np.random.default_rng(9)
    pts = np.column_stack([rng.uniform(-0.1, 0.1, 400), rng.uniform(-0.1, 0.1, 400), np.zeros(400)])
    out = local_normals(PointCloud(pts), k=30)
    dots = np.abs(out.normals[:, 2])
    assert np.all(dots > math.cos(math.radians(0.0001)))  # +/- (0,0,1) within 1e-6


def fibonacci_sphere(n, radius):
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * np.pi * (3.0 - math.sqrt(5.0))
    return radius * np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def test_sphere_normals_near_radial():
    pts = fibonacci_sphere(8000, 0.1)
    out = local_normals(PointCloud(pts), k=30)
    radial = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    cosang = np.abs(np.einsum("ij,ij->i", out.normals, radial))
    worst = math.degrees(math.acos(np.clip(cosang.min(), -1, 1)))
    assert worst <= 2.0


def test_collinear_neighborhoods_marked_invalid():
    pts = np.column_stack([np.linspace(0, 1, 10), np.zeros(10), np.zeros(10)])
    out = local_normals(PointCloud(pts), k=3)
    assert np.all(np.isnan(out.normals))


def test_local_normals_preconditions():
    with pytest.raises(ValueError):
        local_normals(PointCloud(np.zeros((10, 3))), k=2)
    with pytest.raises(ValueError):
        local_normals(PointCloud(np.zeros((4, 3))), k=5)


# ---------------------------------------------------------------------------
# region_normal / smooth

def flat_cloud_with_normals(normal=(0, 0, 1.0), n=200, seed=11):
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(-0.04, 0.04, n), rng.uniform(-0.04, 0.04, n),
                           np.full(n, 0.1)])
    normals = np.tile(np.asarray(normal, dtype=float), (n, 1))
    return PointCloud(pts, normals)


def test_region_normal_flips_downward_normals():
    c = flat_cloud_with_normals((0, 0, -1.0))
    est = region_normal(c, (0.10, 0.10), RigidTransform.identity())
    assert np.allclose(est.normal, [0, 0, 1])
    assert est.support_count == len(c)


def test_region_normal_keeps_upward_normals():
    c = flat_cloud_with_normals((0, 0, 1.0))
    est = region_normal(c, (0.10, 0.10), RigidTransform.identity())
    assert np.allclose(est.normal, [0, 0, 1])


def test_region_normal_flip_invariance():
    rng = np.random.default_rng(12)
    c = flat_cloud_with_normals((0, 0, 1.0))
    tilted = rng.normal(size=(len(c), 3)) * 0.05 + c.normals
    tilted /= np.linalg.norm(tilted, axis=1, keepdims=True)
    a = region_normal(PointCloud(c.points, tilted), (0.1, 0.1), RigidTransform.identity())
    b = region_normal(PointCloud(c.points, -tilted), (0.1, 0.1), RigidTransform.identity())
    assert np.allclose(a.normal, b.normal, atol=1e-12)


def test_region_normal_no_support():
    c = flat_cloud_with_normals()
    far = RigidTransform(t=np.array([10.0, 0, 0]))  # shifts all points out of the window
    with pytest.raises(NoSupportError):
        region_normal(c, (0.10, 0.10), far)


def test_region_normal_ignores_invalid_normals():
    c = flat_cloud_with_normals((0, 0, 1.0))
    normals = c.normals.copy()
    normals[:50] = np.nan
    est = region_normal(PointCloud(c.points, normals), (0.1, 0.1), RigidTransform.identity())
    assert est.support_count == len(c) - 50


def test_smooth_constant_input():
    f = MovingAverageFilter(7)
    for _ in range(10):
        out = smooth(f, NormalEstimate(np.array([0, 0, 1.0]), 5))
        assert np.allclose(out.normal, [0, 0, 1])


def test_smooth_matches_running_mean():
    rng = np.random.default_rng(13)
    f = MovingAverageFilter(7)
    history = []
    for _ in range(20):
        n = unit(rng.normal(size=3) + [0, 0, 2.0])
        history.append(n)
        out = smooth(f, NormalEstimate(n, 1))
        want = unit(np.mean(np.stack(history[-7:]), axis=0))
        assert np.array_equal(out.normal, want)
        assert abs(np.linalg.norm(out.normal) - 1.0) < 1e-9


def test_smooth_window_one_is_identity():
    f = MovingAverageFilter(1)
    n = unit(np.array([0.3, -0.2, 0.9]))
    out = smooth(f, NormalEstimate(n, 1))
    assert np.allclose(out.normal, n, atol=1e-15)


# ---------------------------------------------------------------------------
# run_pipeline

def pipeline_cfg():
    # hover-height tests: tighter voxel keeps plenty of points in the window
    return PipelineConfig(voxel_size=0.005)


def test_full_pipeline_flat_plane():
    extr = default_extrinsics()
    plane = PlaneSurface([0, 0, 0.08], [0, 0, -1])
    c1, c2 = render_for_probe(plane, extr)
    cloud, est = run_pipeline(c1, c2, pipeline_cfg(), extr, MovingAverageFilter(7))
    assert angle_between(est.normal, [0, 0, 1]) < 0.1
    assert len(cloud) > 100


def test_full_pipeline_deterministic():
    extr = default_extrinsics()
    plane = PlaneSurface([0, 0, 0.08], [0, 0, -1])
    c1, c2 = render_for_probe(plane, extr, noise=5e-4, seed=21)
    a_cloud, a_est = run_pipeline(c1, c2, pipeline_cfg(), extr, MovingAverageFilter(7), seed=3)
    b_cloud, b_est = run_pipeline(c1, c2, pipeline_cfg(), extr, MovingAverageFilter(7), seed=3)
    assert np.array_equal(a_cloud.points, b_cloud.points)
    assert np.array_equal(a_est.normal, b_est.normal)


def test_full_pipeline_tilted_plane_noiseless():
    extr = default_extrinsics()
    tilt = RigidTransform.from_axis_angle([1, 0, 0], math.radians(15))
    plane = PlaneSurface([0, 0, 0.08], tilt.apply_vectors(np.array([[0, 0, -1.0]]))[0])
    c1, c2 = render_for_probe(plane, extr)
    _, est = run_pipeline(c1, c2, pipeline_cfg(), extr, MovingAverageFilter(7))
    want = tilt.apply_vectors(np.array([[0, 0, 1.0]]))[0]
    assert angle_between(est.normal, want) < 0.5


def test_full_pipeline_tilted_plane_noisy():
    extr = default_extrinsics()
    tilt = RigidTransform.from_axis_angle([1, 0, 0], math.radians(10))
    plane = PlaneSurface([0, 0, 0.08], tilt.apply_vectors(np.array([[0, 0, -1.0]]))[0])
    c1, c2 = render_for_probe(plane, extr, noise=5e-4, seed=33)
    _, est = run_pipeline(c1, c2, pipeline_cfg(), extr, MovingAverageFilter(7))
    want = tilt.apply_vectors(np.array([[0, 0, 1.0]]))[0]
    assert angle_between(est.normal, want) < 1.5


def test_full_pipeline_quarter_turn_equivariance():
    # rotating both clouds and the probe frame by a quarter turn about z is
    # exact even through the voxel grid (bins permute with the coordinates)
    extr = default_extrinsics()
    tilt = RigidTransform.from_axis_angle([1, 0, 0], math.radians(12))
    plane = PlaneSurface([0, 0, 0.08], tilt.apply_vectors(np.array([[0, 0, -1.0]]))[0])
    c1, c2 = render_for_probe(plane, extr)
    cfg = pipeline_cfg()
    _, est = run_pipeline(c1, c2, cfg, extr, MovingAverageFilter(7), seed=4)

    def quarter_turn(pts):
        return np.column_stack([-pts[:, 1], pts[:, 0], pts[:, 2]])

    Rz = RigidTransform.from_matrix(np.array([
        [0.0, -1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]))
    rot_extr = RigExtrinsics(
        cam2_to_cam1=compose(Rz, extr.cam2_to_cam1),
        cam1_to_probe=compose(extr.cam1_to_probe, Rz.inverse()),
    )
    c1r = PointCloud(quarter_turn(c1.points))
    _, est_r = run_pipeline(c1r, c2, cfg, rot_extr, MovingAverageFilter(7), seed=4)
    assert np.allclose(est_r.normal, est.normal, atol=1e-9)


def test_stage_outputs_subsets_of_inputs():
    rng = np.random.default_rng(14)
    pts = rng.uniform(-0.1, 0.3, size=(600, 3))
    c = PointCloud(pts)
    cropped = crop_z(c, (0.02, 0.25))
    capped = cap_points(cropped, 200, seed=1)
    boxed = box_crop_probe(capped, Box((-0.02,) * 3, (0.02,) * 3), RigidTransform.identity())
    as_set = {tuple(p) for p in pts}
    for stage_out in (cropped, capped, boxed):
        assert all(tuple(p) in as_set for p in stage_out.points)
    sor_in = PointCloud(rng.uniform(0, 0.05, size=(80, 3)))
    sor_out = statistical_outlier_removal(sor_in, k=10, std_mult=2.0)
    in_set = {tuple(p) for p in sor_in.points}
    assert all(tuple(p) in in_set for p in sor_out.points)


def test_pipeline_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(z_crop_range=(0.3, 0.1))
    with pytest.raises(ValueError):
        PipelineConfig(voxel_size=0.0)
    with pytest.raises(ValueError):
        PipelineConfig(ma_window=0)
