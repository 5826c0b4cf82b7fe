"""Point-cloud-to-normal perception chain.

Fixed stage order: per-camera z-crop and point cap, two-camera fusion,
probe box-crop, voxel grid downsampling, statistical outlier removal,
PCA local normals, region-averaged normal with the sign kept toward the
probe (+z in the probe frame), and a short moving-average filter.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .camera import child_seed
from .geometry import PointCloud, RigidTransform, transform_cloud, unit


class NoSupportError(RuntimeError):
    """No usable points under the probe; caller should hold the last estimate."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by two corners."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((p >= lo) & (p <= hi), axis=1)


@dataclass
class PipelineConfig:
    z_crop_range: tuple[float, float] = (0.02, 0.25)
    per_camera_cap: int = 35000
    # default box hugs the probe shaft behind the tip; the tip itself and the
    # skin under it stay outside
    probe_box: Box = field(default_factory=lambda: Box((-0.04, -0.04, -0.30),
                                                       (0.04, 0.04, -0.01)))
    voxel_size: float = 0.005
    sor_k: int = 20
    sor_std_mult: float = 2.0
    normal_k: int = 30
    region: tuple[float, float] = (0.10, 0.10)
    ma_window: int = 7

    def __post_init__(self):
        lo, hi = self.z_crop_range
        if not (0 < lo < hi):
            raise ValueError("z crop range must satisfy 0 < min < max")
        if min(self.per_camera_cap, self.sor_k, self.normal_k, self.ma_window) < 1:
            raise ValueError("caps, neighbor counts and window must be >= 1")
        if self.voxel_size <= 0:
            raise ValueError("voxel size must be positive")


@dataclass
class NormalEstimate:
    """Unit surface normal in the probe-tip frame, z-component >= 0."""

    normal: np.ndarray
    support_count: int
    timestamp: float = 0.0

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float).reshape(3)


@dataclass
class RigExtrinsics:
    """Static transforms tying the two cameras to the probe-tip frame."""

    cam2_to_cam1: RigidTransform
    cam1_to_probe: RigidTransform


class MovingAverageFilter:
    """Component-wise moving average over the last `window` normals."""

    def __init__(self, window: int = 7):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._history: deque[np.ndarray] = deque(maxlen=window)

    def reset(self) -> None:
        self._history.clear()

    def __len__(self) -> int:
        return len(self._history)

    def push(self, normal: np.ndarray) -> np.ndarray:
        self._history.append(np.asarray(normal, dtype=float).copy())
        return unit(np.mean(np.stack(self._history), axis=0))


# ---------------------------------------------------------------------------
# stages

def crop_z(c: PointCloud, z_range: tuple[float, float]) -> PointCloud:
    lo, hi = z_range
    if lo >= hi:
        raise ValueError("crop range must satisfy min < max")
    z = c.points[:, 2]
    return c.select((z >= lo) & (z <= hi))


def cap_points(c: PointCloud, cap: int, seed=0) -> PointCloud:
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if len(c) <= cap:
        return c
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(c), size=cap, replace=False))
    return c.select(idx)


def fuse(cam1: PointCloud, cam2: PointCloud, cam2_to_cam1: RigidTransform) -> PointCloud:
    mapped = transform_cloud(cam2_to_cam1, cam2)
    pts = np.vstack([cam1.points, mapped.points])
    nrm = None
    if cam1.normals is not None and mapped.normals is not None:
        nrm = np.vstack([cam1.normals, mapped.normals])
    return PointCloud(pts, nrm, cam1.frame_id)


def box_crop_probe(c: PointCloud, probe_box: Box, cloud_to_probe: RigidTransform) -> PointCloud:
    if len(c) == 0:
        return c
    inside = probe_box.contains(cloud_to_probe.apply(c.points))
    return c.select(~inside)


def voxel_downsample(c: PointCloud, voxel: float) -> PointCloud:
    if voxel <= 0:
        raise ValueError("voxel size must be positive")
    if len(c) == 0:
        return c
    keys = np.floor(c.points / voxel).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    acc = np.zeros((len(uniq), 3))
    np.add.at(acc, inverse, c.points)
    counts = np.bincount(inverse, minlength=len(uniq))
    return PointCloud(acc / counts[:, None], frame_id=c.frame_id)


def statistical_outlier_removal(c: PointCloud, k: int = 20, std_mult: float = 2.0) -> PointCloud:
    if len(c) <= k:
        raise ValueError(f"statistical outlier removal needs more than k={k} points")
    tree = cKDTree(c.points)
    dists, _ = tree.query(c.points, k=k + 1)
    mean_knn = dists[:, 1:].mean(axis=1)  # drop the self column
    threshold = mean_knn.mean() + std_mult * mean_knn.std()
    return c.select(mean_knn <= threshold)


def local_normals(c: PointCloud, k: int = 30) -> PointCloud:
    """PCA normal per point over its k-nearest neighborhood (self included).

    Degenerate neighborhoods (rank < 2) get NaN normals; sign is left
    unconstrained here and fixed later in the probe frame.
    """
    if k < 3:
        raise ValueError("normal estimation needs k >= 3")
    if len(c) <= k:
        raise ValueError(f"normal estimation needs more than k={k} points")
    tree = cKDTree(c.points)
    _, idx = tree.query(c.points, k=k)
    hoods = c.points[idx]                       # (n, k, 3)
    centered = hoods - hoods.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    eigvals, eigvecs = np.linalg.eigh(cov)      # ascending eigenvalues
    normals = eigvecs[:, :, 0].copy()
    degenerate = eigvals[:, 1] <= 1e-15 + 1e-9 * eigvals[:, 2]
    normals[degenerate] = np.nan
    return PointCloud(c.points.copy(), normals, c.frame_id)


def region_normal(c: PointCloud, region: tuple[float, float],
                  cloud_to_probe: RigidTransform, timestamp: float = 0.0) -> NormalEstimate:
    if c.normals is None:
        raise ValueError("region_normal needs a cloud with normals")
    half_x, half_y = region[0] / 2.0, region[1] / 2.0
    p = cloud_to_probe.apply(c.points)
    selected = (np.abs(p[:, 0]) <= half_x) & (np.abs(p[:, 1]) <= half_y)
    normals = c.normals[selected]
    normals = normals[np.all(np.isfinite(normals), axis=1)]
    if len(normals) == 0:
        raise NoSupportError("no valid points under the probe region")
    n_probe = normals @ cloud_to_probe.rotation().T
    flip = n_probe[:, 2] < 0
    n_probe[flip] *= -1.0
    return NormalEstimate(unit(n_probe.mean(axis=0)), int(len(n_probe)), timestamp)


def smooth(f: MovingAverageFilter, n: NormalEstimate) -> NormalEstimate:
    return NormalEstimate(f.push(n.normal), n.support_count, n.timestamp)


def run_pipeline(cam1: PointCloud, cam2: PointCloud, cfg: PipelineConfig,
                 extrinsics: RigExtrinsics, filt: MovingAverageFilter,
                 seed=0, timestamp: float = 0.0) -> tuple[PointCloud, NormalEstimate]:
    c1 = cap_points(crop_z(cam1, cfg.z_crop_range), cfg.per_camera_cap, seed=child_seed(seed, 0))
    c2 = cap_points(crop_z(cam2, cfg.z_crop_range), cfg.per_camera_cap, seed=child_seed(seed, 1))
    fused = fuse(c1, c2, extrinsics.cam2_to_cam1)
    fused = box_crop_probe(fused, cfg.probe_box, extrinsics.cam1_to_probe)
    fused = voxel_downsample(fused, cfg.voxel_size)
    fused = statistical_outlier_removal(fused, cfg.sor_k, cfg.sor_std_mult)
    fused = local_normals(fused, cfg.normal_k)
    estimate = region_normal(fused, cfg.region, extrinsics.cam1_to_probe, timestamp)
    return fused, smooth(filt, estimate)
