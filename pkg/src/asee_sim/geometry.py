"""Small SE(3) toolbox: quaternions, rigid transforms, twists, point clouds.

Conventions used project-wide:
  - column vectors, transforms map source-frame coordinates into the target
    frame: p_target = R @ p_source + t
  - quaternions stored as (w, x, y, z), kept unit length
  - twists are (linear, angular) pairs, linear stacked over angular
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_EPS = 1e-12


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z)

def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < _EPS:
        raise ValueError("zero-norm quaternion")
    return q / n


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    # Shepperd's method: pick the largest diagonal combination for stability.
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array([(R[2, 1] - R[1, 2]) / s,
                      0.25 * s,
                      (R[0, 1] + R[1, 0]) / s,
                      (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] >= R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array([(R[0, 2] - R[2, 0]) / s,
                      (R[0, 1] + R[1, 0]) / s,
                      0.25 * s,
                      (R[1, 2] + R[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array([(R[1, 0] - R[0, 1]) / s,
                      (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s,
                      0.25 * s])
    return quat_normalize(q)


def quat_from_axis_angle(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < _EPS:
        raise ValueError("zero-length rotation axis")
    half = 0.5 * angle_rad
    return np.concatenate([[math.cos(half)], math.sin(half) * axis / n])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=float)


# ---------------------------------------------------------------------------
# core value types

@dataclass
class RigidTransform:
    """Rotation (unit quaternion) plus translation, p_target = R p_source + t."""

    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.q = quat_normalize(np.asarray(self.q, dtype=float))
        self.t = np.asarray(self.t, dtype=float).reshape(3).copy()

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform()

    @staticmethod
    def from_rotation(R: np.ndarray, t=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return RigidTransform(matrix_to_quat(R), np.asarray(t, dtype=float))

    @staticmethod
    def from_matrix(M: np.ndarray) -> "RigidTransform":
        M = np.asarray(M, dtype=float)
        return RigidTransform(matrix_to_quat(M[:3, :3]), M[:3, 3])

    @staticmethod
    def from_axis_angle(axis, angle_rad: float, t=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return RigidTransform(quat_from_axis_angle(axis, angle_rad), np.asarray(t, dtype=float))

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation()
        M[:3, 3] = self.t
        return M

    def inverse(self) -> "RigidTransform":
        qi = quat_conj(self.q)
        return RigidTransform(qi, -quat_rotate(qi, self.t))

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Map one point or an (N, 3) batch of points."""
        p = np.asarray(p, dtype=float)
        return p @ self.rotation().T + self.t

    def apply_vectors(self, v: np.ndarray) -> np.ndarray:
        """Rotate free vectors (directions, normals); translation ignored."""
        return np.asarray(v, dtype=float) @ self.rotation().T

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)


@dataclass
class Twist:
    """Linear (m/s) and angular (rad/s) velocity of a frame."""

    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float).reshape(3).copy()
        self.angular = np.asarray(self.angular, dtype=float).reshape(3).copy()

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])

    @staticmethod
    def from_vector(v: np.ndarray) -> "Twist":
        v = np.asarray(v, dtype=float).reshape(6)
        return Twist(v[:3], v[3:])


@dataclass
class PointCloud:
    """Ordered 3-D points in meters with optional aligned unit normals.

    Rows of ``normals`` may be NaN to mark points whose normal estimate was
    degenerate; valid rows are unit length.
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    frame_id: str = ""

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.size == 0:
            self.points = np.zeros((0, 3))
        if self.points.shape[1] != 3:
            raise ValueError("points must be (N, 3)")
        if self.normals is not None:
            self.normals = np.atleast_2d(np.asarray(self.normals, dtype=float))
            if self.normals.shape != self.points.shape:
                raise ValueError("normals must align with points")

    def __len__(self) -> int:
        return self.points.shape[0]

    @staticmethod
    def empty(frame_id: str = "") -> "PointCloud":
        return PointCloud(np.zeros((0, 3)), frame_id=frame_id)

    def select(self, mask_or_indices) -> "PointCloud":
        pts = self.points[mask_or_indices]
        nrm = self.normals[mask_or_indices] if self.normals is not None else None
        return PointCloud(pts, nrm, self.frame_id)


# ---------------------------------------------------------------------------
# operations

def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform mapping a point through b, then a."""
    return RigidTransform(quat_mul(a.q, b.q), quat_rotate(a.q, b.t) + a.t)


def transform_cloud(T: RigidTransform, c: PointCloud, frame_id: str | None = None) -> PointCloud:
    pts = c.points @ T.rotation().T + T.t
    nrm = c.normals @ T.rotation().T if c.normals is not None else None
    return PointCloud(pts, nrm, c.frame_id if frame_id is None else frame_id)


def skew(p: np.ndarray) -> np.ndarray:
    x, y, z = np.asarray(p, dtype=float)
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def adjoint_map(T: RigidTransform, body: Twist) -> Twist:
    """Map a body-frame twist to the base frame through the standard
    block adjoint [[R, [p]R], [0, R]] of the body pose T."""
    R = T.rotation()
    w_base = R @ body.angular
    v_base = R @ body.linear + skew(T.t) @ w_base
    return Twist(v_base, w_base)


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Angle between two nonzero vectors, degrees in [0, 180]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < _EPS or nb < _EPS:
        raise ValueError("angle_between requires nonzero vectors")
    d = np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0)
    return math.degrees(math.acos(d))


def unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < _EPS:
        raise ValueError("cannot normalize zero vector")
    return v / n


# ---------------------------------------------------------------------------
# ASCII PLY I/O (element vertex, double x y z [nx ny nz])

def cloud_to_ply(cloud: PointCloud) -> str:
    with_normals = cloud.normals is not None
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if with_normals:
        lines += ["property double nx", "property double ny", "property double nz"]
    lines.append("end_header")
    rows = cloud.points if not with_normals else np.hstack([cloud.points, cloud.normals])
    for row in rows:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def save_ply(cloud: PointCloud, path) -> None:
    with open(path, "w") as f:
        f.write(cloud_to_ply(cloud))


def load_ply(path) -> PointCloud:
    with open(path) as f:
        raw = [ln.strip() for ln in f if ln.strip()]
    if not raw or raw[0] != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n_vertex = 0
    props: list[str] = []
    i = 1
    while i < len(raw) and raw[i] != "end_header":
        tok = raw[i].split()
        if tok[0] == "element" and tok[1] == "vertex":
            n_vertex = int(tok[2])
        elif tok[0] == "property" and len(tok) == 3:
            props.append(tok[2])
        i += 1
    if i == len(raw):
        raise ValueError(f"{path}: missing end_header")
    body = raw[i + 1 : i + 1 + n_vertex]
    data = np.array([[float(v) for v in ln.split()] for ln in body], dtype=float)
    if n_vertex == 0:
        data = np.zeros((0, len(props) if props else 3))
    idx = {name: k for k, name in enumerate(props)}
    pts = data[:, [idx["x"], idx["y"], idx["z"]]]
    nrm = None
    if all(k in idx for k in ("nx", "ny", "nz")):
        nrm = data[:, [idx["nx"], idx["ny"], idx["nz"]]]
    return PointCloud(pts, nrm)
