"""Synthetic depth sensing: pinhole rendering of analytic and mesh surfaces.

Depth images store the camera-frame z-coordinate of each hit (not ray range),
+z along the optical axis, NaN for missing returns. Valid depths are limited
to the sensor range [0.07, 0.50] m by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud, RigidTransform, compose, unit

_RAY_EPS = 1e-9
DEFAULT_DEPTH_RANGE = (0.07, 0.50)


def child_seed(seed, *tail) -> list[int]:
    """Extend a seed (int or int sequence) into a derived seed sequence."""
    base = np.atleast_1d(np.asarray(seed, dtype=np.int64))
    return [int(x) for x in base] + [int(t) for t in tail]


@dataclass(frozen=True)
class PinholeIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image")

    @staticmethod
    def default() -> "PinholeIntrinsics":
        return PinholeIntrinsics(fx=120.0, fy=120.0, cx=79.5, cy=59.5, width=160, height=120)


_ray_cache: dict[PinholeIntrinsics, np.ndarray] = {}


def _pixel_rays(intr: PinholeIntrinsics) -> np.ndarray:
    """Unit ray directions in the camera frame, one row per pixel, row-major."""
    cached = _ray_cache.get(intr)
    if cached is not None:
        return cached
    u, v = np.meshgrid(np.arange(intr.width), np.arange(intr.height))
    d = np.column_stack([
        (u.ravel() - intr.cx) / intr.fx,
        (v.ravel() - intr.cy) / intr.fy,
        np.ones(intr.width * intr.height),
    ])
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    _ray_cache[intr] = d
    return d


@dataclass
class DepthImage:
    """Height × width grid of camera-frame z depths in meters; NaN = missing."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.values)


# ---------------------------------------------------------------------------
# surface models

class SurfaceModel:
    """A raycastable scene surface with outward/upward oriented normals."""

    def raycast(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Parametric hit distance along each unit direction; NaN = miss."""
        raise NotImplementedError

    def normal_at(self, points: np.ndarray) -> np.ndarray:
        """Oriented unit surface normal nearest each query point, (N, 3)."""
        raise NotImplementedError

    def signed_height(self, points: np.ndarray) -> np.ndarray:
        """Signed offset of each point along the local surface normal
        (positive above/outside, negative = penetration)."""
        raise NotImplementedError


class PlaneSurface(SurfaceModel):
    def __init__(self, point, normal):
        self.point = np.asarray(point, dtype=float).reshape(3)
        self.normal = unit(normal)

    def raycast(self, origins, dirs):
        origins = np.atleast_2d(origins)
        dirs = np.atleast_2d(dirs)
        denom = dirs @ self.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((self.point - origins) @ self.normal) / denom
        t = np.where((np.abs(denom) > 1e-12) & (t > _RAY_EPS), t, np.nan)
        return t

    def normal_at(self, points):
        points = np.atleast_2d(points)
        return np.tile(self.normal, (points.shape[0], 1))

    def signed_height(self, points):
        return (np.atleast_2d(points) - self.point) @ self.normal


class SphereSurface(SurfaceModel):
    def __init__(self, center, radius: float):
        if radius <= 0:
            raise ValueError("sphere radius must be positive")
        self.center = np.asarray(center, dtype=float).reshape(3)
        self.radius = float(radius)

    def raycast(self, origins, dirs):
        origins = np.atleast_2d(origins)
        dirs = np.atleast_2d(dirs)
        oc = origins - self.center
        b = np.einsum("ij,ij->i", oc, dirs)
        c = np.einsum("ij,ij->i", oc, oc) - self.radius**2
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0.0))
        t_near = -b - root
        t_far = -b + root
        t = np.where(t_near > _RAY_EPS, t_near, t_far)
        return np.where((disc >= 0) & (t > _RAY_EPS), t, np.nan)

    def normal_at(self, points):
        d = np.atleast_2d(points) - self.center
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    def signed_height(self, points):
        return np.linalg.norm(np.atleast_2d(points) - self.center, axis=1) - self.radius


class HeightfieldSurface(SurfaceModel):
    """z = h(x, y) over a regular grid, bilinear between nodes.

    Ray casting marches at half the cell size and refines brackets by
    bisection to 1e-6 m; points outside the grid footprint never hit.
    """

    def __init__(self, z_grid, cell_size: float, origin=(0.0, 0.0)):
        self.z = np.atleast_2d(np.asarray(z_grid, dtype=float))
        if self.z.shape[0] < 2 or self.z.shape[1] < 2:
            raise ValueError("heightfield needs at least a 2x2 grid")
        if cell_size <= 0:
            raise ValueError("cell size must be positive")
        self.cell = float(cell_size)
        self.origin = np.asarray(origin, dtype=float).reshape(2)
        ny, nx = self.z.shape
        self.x_range = (self.origin[0], self.origin[0] + (nx - 1) * self.cell)
        self.y_range = (self.origin[1], self.origin[1] + (ny - 1) * self.cell)

    def _cell_coords(self, x, y):
        fx = (np.asarray(x) - self.origin[0]) / self.cell
        fy = (np.asarray(y) - self.origin[1]) / self.cell
        j = np.clip(np.floor(fx).astype(int), 0, self.z.shape[1] - 2)
        i = np.clip(np.floor(fy).astype(int), 0, self.z.shape[0] - 2)
        return i, j, fx - j, fy - i

    def height_at(self, x, y):
        i, j, tx, ty = self._cell_coords(x, y)
        z = self.z
        return (z[i, j] * (1 - tx) * (1 - ty) + z[i, j + 1] * tx * (1 - ty)
                + z[i + 1, j] * (1 - tx) * ty + z[i + 1, j + 1] * tx * ty)

    def gradient_at(self, x, y):
        i, j, tx, ty = self._cell_coords(x, y)
        z = self.z
        dhdx = ((z[i, j + 1] - z[i, j]) * (1 - ty) + (z[i + 1, j + 1] - z[i + 1, j]) * ty) / self.cell
        dhdy = ((z[i + 1, j] - z[i, j]) * (1 - tx) + (z[i + 1, j + 1] - z[i, j + 1]) * tx) / self.cell
        return dhdx, dhdy

    def _inside(self, x, y):
        return ((x >= self.x_range[0]) & (x <= self.x_range[1])
                & (y >= self.y_range[0]) & (y <= self.y_range[1]))

    def raycast(self, origins, dirs):
        origins = np.atleast_2d(origins)
        dirs = np.atleast_2d(dirs)
        n = origins.shape[0]
        z_lo = float(self.z.min()) - 1e-6
        z_hi = float(self.z.max()) + 1e-6
        lo = np.array([self.x_range[0], self.y_range[0], z_lo])
        hi = np.array([self.x_range[1], self.y_range[1], z_hi])
        # slab intersection with the grid bounding box
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t1 = (lo - origins) * inv
            t2 = (hi - origins) * inv
        # axis-parallel rays: inside the slab iff the origin coordinate is
        par = np.abs(dirs) < 1e-15
        t_lo = np.where(par, -np.inf, np.minimum(t1, t2))
        t_hi = np.where(par, np.inf, np.maximum(t1, t2))
        inside_par = (origins >= lo) & (origins <= hi)
        t_lo = np.where(par & ~inside_par, np.inf, t_lo)
        t_enter = np.maximum(t_lo.max(axis=1), _RAY_EPS)
        t_exit = t_hi.min(axis=1)
        alive = t_exit > t_enter

        def f_of(t, mask):
            p = origins[mask] + t[mask, None] * dirs[mask]
            return p[:, 2] - self.height_at(p[:, 0], p[:, 1])

        step = self.cell / 2.0
        span = np.where(alive, t_exit - t_enter, 0.0)
        n_steps = int(math.ceil(span.max() / step)) if alive.any() else 0

        prev_t = t_enter.copy()
        prev_f = np.full(n, np.nan)
        if alive.any():
            prev_f[alive] = f_of(t_enter, alive)
        bracket_lo = np.full(n, np.nan)
        bracket_hi = np.full(n, np.nan)
        have = np.zeros(n, dtype=bool)
        marching = alive.copy()
        for k in range(1, n_steps + 1):
            if not marching.any():
                break
            t_k = np.minimum(t_enter + k * step, t_exit)
            f_k = np.full(n, np.nan)
            f_k[marching] = f_of(t_k, marching)
            found = marching & (prev_f >= 0) & (f_k < 0)
            bracket_lo[found] = prev_t[found]
            bracket_hi[found] = t_k[found]
            have |= found
            marching &= ~found & (t_k < t_exit)
            prev_t, prev_f = t_k, f_k

        # bisection refinement on bracketed rays
        if have.any():
            lo_t = bracket_lo[have]
            hi_t = bracket_hi[have]
            sub_origins = origins[have]
            sub_dirs = dirs[have]
            for _ in range(40):
                if (hi_t - lo_t).max() <= 1e-6:
                    break
                mid = 0.5 * (lo_t + hi_t)
                p = sub_origins + mid[:, None] * sub_dirs
                below = p[:, 2] - self.height_at(p[:, 0], p[:, 1]) < 0
                hi_t = np.where(below, mid, hi_t)
                lo_t = np.where(below, lo_t, mid)
            out = np.full(n, np.nan)
            out[have] = 0.5 * (lo_t + hi_t)
            return out
        return np.full(n, np.nan)

    def normal_at(self, points):
        points = np.atleast_2d(points)
        dhdx, dhdy = self.gradient_at(points[:, 0], points[:, 1])
        n = np.column_stack([-dhdx, -dhdy, np.ones(points.shape[0])])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def signed_height(self, points):
        points = np.atleast_2d(points)
        x, y = points[:, 0], points[:, 1]
        gap = points[:, 2] - self.height_at(x, y)
        # vertical gap projected onto the local normal = true offset for the
        # locally planar patch
        nz = self.normal_at(points)[:, 2]
        return np.where(self._inside(x, y), gap * nz, np.inf)


class MeshSurface(SurfaceModel):
    """Triangle mesh; normals follow face winding (counter-clockwise = out)."""

    def __init__(self, vertices, faces):
        self.vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
        self.faces = np.atleast_2d(np.asarray(faces, dtype=int))
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError("face indices out of range")
        self._v0 = self.vertices[self.faces[:, 0]]
        self._e1 = self.vertices[self.faces[:, 1]] - self._v0
        self._e2 = self.vertices[self.faces[:, 2]] - self._v0
        fn = np.cross(self._e1, self._e2)
        norms = np.linalg.norm(fn, axis=1, keepdims=True)
        self._areas = 0.5 * norms.ravel()
        with np.errstate(invalid="ignore"):
            self._face_normals = np.where(norms > 1e-15, fn / norms, 0.0)

    def raycast(self, origins, dirs):
        origins = np.atleast_2d(origins)
        dirs = np.atleast_2d(dirs)
        n = origins.shape[0]
        best = np.full(n, np.inf)
        for f in range(len(self.faces)):
            e1, e2, v0 = self._e1[f], self._e2[f], self._v0[f]
            h = np.cross(dirs, e2)
            a = h @ e1
            ok = np.abs(a) > 1e-14
            with np.errstate(divide="ignore", invalid="ignore"):
                inv_a = np.where(ok, 1.0 / a, 0.0)
                s = origins - v0
                u = inv_a * np.einsum("ij,ij->i", s, h)
                q = np.cross(s, e1)
                v = inv_a * np.einsum("ij,ij->i", dirs, q)
                t = inv_a * (q @ e2)
            mask = (ok & (u >= -1e-9) & (v >= -1e-9) & (u + v <= 1 + 1e-9)
                    & (t > _RAY_EPS) & (t < best))
            best[mask] = t[mask]
        return np.where(np.isfinite(best), best, np.nan)

    def _closest_on_faces(self, p):
        """Closest point to p on every triangle (Ericson's region test)."""
        a, ab, ac = self._v0, self._e1, self._e2
        ap = p - a
        d1 = np.einsum("ij,ij->i", ab, ap)
        d2 = np.einsum("ij,ij->i", ac, ap)
        bp = p - (a + ab)
        d3 = np.einsum("ij,ij->i", ab, bp)
        d4 = np.einsum("ij,ij->i", ac, bp)
        cp = p - (a + ac)
        d5 = np.einsum("ij,ij->i", ab, cp)
        d6 = np.einsum("ij,ij->i", ac, cp)
        vc = d1 * d4 - d3 * d2
        vb = d5 * d2 - d1 * d6
        va = d3 * d6 - d5 * d4
        with np.errstate(divide="ignore", invalid="ignore"):
            t_ab = np.clip(d1 / (d1 - d3), 0, 1)
            t_ac = np.clip(d2 / (d2 - d6), 0, 1)
            t_bc = np.clip((d4 - d3) / ((d4 - d3) + (d5 - d6)), 0, 1)
            denom = va + vb + vc
            v_in = np.where(denom != 0, vb / denom, 0.0)
            w_in = np.where(denom != 0, vc / denom, 0.0)
        out = a + v_in[:, None] * ab + w_in[:, None] * ac
        on_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        out = np.where(on_bc[:, None], a + ab + t_bc[:, None] * (ac - ab), out)
        on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(on_ac[:, None], a + t_ac[:, None] * ac, out)
        at_c = (d6 >= 0) & (d5 <= d6)
        out = np.where(at_c[:, None], a + ac, out)
        on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(on_ab[:, None], a + t_ab[:, None] * ab, out)
        at_b = (d3 >= 0) & (d4 <= d3)
        out = np.where(at_b[:, None], a + ab, out)
        at_a = (d1 <= 0) & (d2 <= 0)
        out = np.where(at_a[:, None], a, out)
        return out

    def _nearest(self, points):
        points = np.atleast_2d(points)
        idx = np.empty(len(points), dtype=int)
        closest = np.empty_like(points)
        for k, p in enumerate(points):
            cand = self._closest_on_faces(p)
            d2 = np.einsum("ij,ij->i", cand - p, cand - p)
            idx[k] = int(np.argmin(d2))
            closest[k] = cand[idx[k]]
        return idx, closest

    def normal_at(self, points):
        idx, _ = self._nearest(points)
        return self._face_normals[idx]

    def signed_height(self, points):
        points = np.atleast_2d(points)
        idx, closest = self._nearest(points)
        delta = points - closest
        dist = np.linalg.norm(delta, axis=1)
        side = np.einsum("ij,ij->i", delta, self._face_normals[idx])
        return np.where(side >= 0, dist, -dist)

    def sample_surface(self, count: int, seed: int = 0) -> PointCloud:
        """Uniform area-weighted random samples on the mesh."""
        rng = np.random.default_rng(seed)
        probs = self._areas / self._areas.sum()
        idx = rng.choice(len(self.faces), size=count, p=probs)
        u = rng.random(count)
        v = rng.random(count)
        flip = u + v > 1
        u[flip] = 1 - u[flip]
        v[flip] = 1 - v[flip]
        pts = self._v0[idx] + u[:, None] * self._e1[idx] + v[:, None] * self._e2[idx]
        return PointCloud(pts)


class PosedSurface(SurfaceModel):
    """A surface model placed in the world by a rigid pose (local -> world)."""

    def __init__(self, base: SurfaceModel, pose: RigidTransform | None = None):
        self.base = base
        self.pose = pose if pose is not None else RigidTransform.identity()

    @property
    def pose(self) -> RigidTransform:
        return self._pose

    @pose.setter
    def pose(self, value: RigidTransform):
        self._pose = value
        self._inv = value.inverse()

    def raycast(self, origins, dirs):
        o = self._inv.apply(np.atleast_2d(origins))
        d = np.atleast_2d(dirs) @ self._inv.rotation().T
        return self.base.raycast(o, d)

    def normal_at(self, points):
        local = self._inv.apply(np.atleast_2d(points))
        return self.base.normal_at(local) @ self._pose.rotation().T

    def signed_height(self, points):
        return self.base.signed_height(self._inv.apply(np.atleast_2d(points)))


# ---------------------------------------------------------------------------
# rendering

def render_depth(surface: SurfaceModel, camera_pose: RigidTransform,
                 intr: PinholeIntrinsics, noise_sigma: float = 0.0,
                 rng_seed: int = 0, rng: np.random.Generator | None = None,
                 depth_range=DEFAULT_DEPTH_RANGE) -> DepthImage:
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    rays_cam = _pixel_rays(intr)
    R = camera_pose.rotation()
    dirs_world = rays_cam @ R.T
    origins = np.broadcast_to(camera_pose.t, dirs_world.shape)
    t = surface.raycast(origins, dirs_world)
    depth = t * rays_cam[:, 2]
    if noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(rng_seed)
        depth = depth + rng.normal(0.0, noise_sigma, depth.shape)
    lo, hi = depth_range
    depth = np.where((depth >= lo) & (depth <= hi), depth, np.nan)
    return DepthImage(depth.reshape(intr.height, intr.width))


def depth_to_cloud(img: DepthImage, intr: PinholeIntrinsics) -> PointCloud:
    v, u = np.nonzero(img.valid_mask())
    if len(v) == 0:
        return PointCloud.empty()
    d = img.values[v, u]
    x = (u - intr.cx) * d / intr.fx
    y = (v - intr.cy) * d / intr.fy
    return PointCloud(np.column_stack([x, y, d]))


def render_rig(surface: SurfaceModel, cam1_pose: RigidTransform,
               cam2_to_cam1: RigidTransform, intr: PinholeIntrinsics,
               noise_sigma: float = 0.0, seed: int = 0,
               depth_range=DEFAULT_DEPTH_RANGE) -> tuple[PointCloud, PointCloud]:
    """Render both cameras; returns clouds in each camera's own frame.

    cam2_to_cam1 maps cam2-frame coordinates into cam1 frame, so the world
    pose of cam2 is cam1_pose composed with it.
    """
    cam2_pose = compose(cam1_pose, cam2_to_cam1)
    img1 = render_depth(surface, cam1_pose, intr, noise_sigma,
                        rng=np.random.default_rng(child_seed(seed, 0)), depth_range=depth_range)
    img2 = render_depth(surface, cam2_pose, intr, noise_sigma,
                        rng=np.random.default_rng(child_seed(seed, 1)), depth_range=depth_range)
    return depth_to_cloud(img1, intr), depth_to_cloud(img2, intr)


# ---------------------------------------------------------------------------
# file ingestion

def load_obj(path) -> MeshSurface:
    """ASCII OBJ with v/f records; polygon faces are fan-triangulated."""
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path) as f:
        for line in f:
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            if tok[0] == "v":
                verts.append([float(x) for x in tok[1:4]])
            elif tok[0] == "f":
                idx = [int(t.split("/")[0]) - 1 for t in tok[1:]]
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise ValueError(f"{path}: no usable v/f records")
    return MeshSurface(np.array(verts), np.array(faces))


def save_obj(mesh: MeshSurface, path) -> None:
    lines = [f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}" for p in mesh.vertices]
    lines += [f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}" for f in mesh.faces]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_heightfield_csv(path) -> HeightfieldSurface:
    """First line: cell_size, origin_x, origin_y; then row-major z values."""
    with open(path) as f:
        rows = [ln.strip() for ln in f if ln.strip()]
    header = [float(x) for x in rows[0].split(",")]
    if len(header) != 3:
        raise ValueError(f"{path}: header must be cell_size, origin_x, origin_y")
    grid = np.array([[float(x) for x in row.split(",")] for row in rows[1:]])
    return HeightfieldSurface(grid, header[0], (header[1], header[2]))


def save_heightfield_csv(hf: HeightfieldSurface, path) -> None:
    lines = [f"{hf.cell:.17g},{hf.origin[0]:.17g},{hf.origin[1]:.17g}"]
    lines += [",".join(f"{z:.17g}" for z in row) for row in hf.z]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
