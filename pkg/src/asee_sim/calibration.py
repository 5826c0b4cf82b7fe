"""Offline transform estimation: AX=XB hand-eye solving, correspondence-based
rigid registration, and the static camera-to-camera mount transform.

Hand-eye rotation follows the Park-Martin closed form: with alpha_i/beta_i
the rotation log-vectors of the end-effector/camera relative motions and
M = sum(beta_i alpha_i^T), the rotation is the orthogonal polar factor of
M^T (equal to (M^T M)^(-1/2) M^T at full rank, and completing it when only
two independent axes are available).  Translation then solves the linear
system (R_A - I) t_X = R_X t_B - t_A in least squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, compose, quat_from_axis_angle

DEGENERACY_EIGENVALUE = 1e-12


class DegenerateMotionError(RuntimeError):
    """Motion pairs span fewer than two independent rotation axes."""


class DegenerateCorrespondenceError(RuntimeError):
    """Too few or collinear fiducial correspondences."""


@dataclass(frozen=True)
class MotionPair:
    A: RigidTransform  # relative end-effector motion
    B: RigidTransform  # relative camera motion over the same interval


@dataclass(frozen=True)
class HandEyeResult:
    X: RigidTransform  # camera frame expressed in the flange frame
    rotation_residual: float   # rad, RMS over pairs
    translation_residual: float  # m, RMS over pairs


def _log_rotation(T: RigidTransform) -> np.ndarray:
    """Rotation-vector log map from the wxyz quaternion."""
    w, vec = T.q[0], T.q[1:]
    n = np.linalg.norm(vec)
    if n < 1e-15:
        return np.zeros(3)
    angle = 2.0 * math.atan2(n, w)
    if angle > math.pi:
        angle -= 2.0 * math.pi
    return (angle / n) * vec


def _rotation_angle(R: np.ndarray) -> float:
    # atan2 form stays accurate near zero where acos(trace) loses digits
    s = 0.5 * np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    c = (np.trace(R) - 1.0) / 2.0
    return math.atan2(s, c)


def solve_ax_xb(pairs) -> HandEyeResult:
    pairs = list(pairs)
    if len(pairs) < 2:
        raise DegenerateMotionError("need at least two motion pairs")
    alphas = np.stack([_log_rotation(p.A) for p in pairs])
    betas = np.stack([_log_rotation(p.B) for p in pairs])
    M = betas.T @ alphas  # sum of beta_i alpha_i^T
    U, s, Vt = np.linalg.svd(M.T)
    if s[1] ** 2 < DEGENERACY_EIGENVALUE:
        raise DegenerateMotionError("rotation axes do not span two directions")
    R_x = U @ np.diag([1.0, 1.0, np.linalg.det(U @ Vt)]) @ Vt

    rows = np.vstack([p.A.rotation() - np.eye(3) for p in pairs])
    rhs = np.concatenate([R_x @ p.B.t - p.A.t for p in pairs])
    t_x, *_ = np.linalg.lstsq(rows, rhs, rcond=None)

    rot_sq = [_rotation_angle(p.A.rotation() @ R_x @ (R_x @ p.B.rotation()).T) ** 2
              for p in pairs]
    trans_sq = [np.sum(((p.A.rotation() - np.eye(3)) @ t_x - (R_x @ p.B.t - p.A.t)) ** 2)
                for p in pairs]
    X = RigidTransform.from_rotation(R_x, t_x)
    return HandEyeResult(X=X,
                         rotation_residual=math.sqrt(np.mean(rot_sq)),
                         translation_residual=math.sqrt(np.mean(trans_sq)))


def make_motion_pairs(flange_poses, camera_poses, all_pairs: bool = False):
    """Relative-motion pairs from synchronized absolute pose lists."""
    if len(flange_poses) != len(camera_poses):
        raise ValueError("pose lists must have equal length")
    if all_pairs:
        idx = [(i, j) for i in range(len(flange_poses)) for j in range(i + 1, len(flange_poses))]
    else:
        idx = [(i, i + 1) for i in range(len(flange_poses) - 1)]
    return [MotionPair(A=compose(flange_poses[i].inverse(), flange_poses[j]),
                       B=compose(camera_poses[i].inverse(), camera_poses[j]))
            for i, j in idx]


def synthetic_pairs(X: RigidTransform, count: int, seed: int = 0,
                    rot_noise_deg: float = 0.0, trans_noise_m: float = 0.0,
                    all_pairs: bool = False):
    """Ground-truth motion pairs for a known hand-eye transform X, with
    optional measurement noise applied to the camera side."""
    rng = np.random.default_rng(seed)
    flange = []
    for _ in range(count + 1):
        axis = rng.normal(size=3)
        T = RigidTransform.from_axis_angle(axis, rng.uniform(0.3, 1.2),
                                           t=rng.uniform(-0.3, 0.3, 3))
        flange.append(T)
    camera = [compose(T, X) for T in flange]
    if rot_noise_deg > 0 or trans_noise_m > 0:
        sigma = math.radians(rot_noise_deg)
        noisy = []
        for C in camera:
            eps = rng.normal(0.0, sigma, 3) if sigma > 0 else np.zeros(3)
            dq = (quat_from_axis_angle(eps, float(np.linalg.norm(eps)))
                  if np.linalg.norm(eps) > 1e-15 else np.array([1.0, 0, 0, 0]))
            dt = rng.normal(0.0, trans_noise_m, 3) if trans_noise_m > 0 else np.zeros(3)
            noisy.append(compose(C, RigidTransform(q=dq, t=dt)))
        camera = noisy
    return make_motion_pairs(flange, camera, all_pairs=all_pairs)


def save_pose_pairs(path, pairs):
    with open(path, "w") as f:
        f.write("# tx ty tz qw qx qy qz (A)   tx ty tz qw qx qy qz (B)\n")
        for p in pairs:
            nums = np.concatenate([p.A.t, p.A.q, p.B.t, p.B.q])
            f.write(" ".join(f"{x:.17g}" for x in nums) + "\n")


def parse_pose_pairs(text: str):
    pairs = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        v = np.array([float(x) for x in line.split()])
        if v.shape != (14,):
            raise ValueError("each pair line needs 14 numbers (A then B)")
        pairs.append(MotionPair(
            A=RigidTransform(q=v[3:7], t=v[0:3]),
            B=RigidTransform(q=v[10:14], t=v[7:10]),
        ))
    return pairs


def load_pose_pairs(path):
    with open(path) as f:
        return parse_pose_pairs(f.read())


def register_fiducials(source, target) -> RigidTransform:
    """Least-squares rigid transform mapping source points onto target."""
    src = np.asarray(source, dtype=float).reshape(-1, 3)
    tgt = np.asarray(target, dtype=float).reshape(-1, 3)
    if src.shape != tgt.shape or src.shape[0] < 3:
        raise DegenerateCorrespondenceError("need >= 3 corresponding points")
    sc, tc = src.mean(axis=0), tgt.mean(axis=0)
    s0, t0 = src - sc, tgt - tc
    spread = np.linalg.svd(s0, compute_uv=False)
    if spread[1] <= 1e-9 * max(spread[0], 1e-30):
        raise DegenerateCorrespondenceError("correspondences are collinear")
    H = s0.T @ t0
    U, _, Vt = np.linalg.svd(H)
    R = Vt.T @ np.diag([1.0, 1.0, np.linalg.det(Vt.T @ U.T)]) @ U.T
    return RigidTransform.from_rotation(R, tc - R @ sc)


def fiducial_rms(T: RigidTransform, source, target) -> float:
    src = np.asarray(source, dtype=float).reshape(-1, 3)
    tgt = np.asarray(target, dtype=float).reshape(-1, 3)
    return float(np.sqrt(np.mean(np.sum((T.apply(src) - tgt) ** 2, axis=1))))


def mount_transforms(lateral_m: float = 0.06, back_m: float = 0.15,
                     pitch_deg: float = 25.0):
    """Camera poses in the probe frame for the symmetric two-camera mount:
    one camera each side of the probe axis, pitched toward it."""
    pitch = math.radians(pitch_deg)
    cam1 = RigidTransform.from_axis_angle([0, 1, 0], +pitch, t=(-lateral_m, 0.0, -back_m))
    cam2 = RigidTransform.from_axis_angle([0, 1, 0], -pitch, t=(+lateral_m, 0.0, -back_m))
    return cam1, cam2


def static_extrinsic(config=None) -> RigidTransform:
    """cam2 -> cam1 transform from rig configuration; identity if unspecified."""
    if not config:
        return RigidTransform.identity()
    if "translation" in config or "quaternion_wxyz" in config:
        return RigidTransform(
            q=np.asarray(config.get("quaternion_wxyz", [1.0, 0, 0, 0]), dtype=float),
            t=np.asarray(config.get("translation", [0.0, 0, 0]), dtype=float),
        )
    cam1, cam2 = mount_transforms(
        lateral_m=config.get("lateral_offset_m", 0.06),
        back_m=config.get("back_offset_m", 0.15),
        pitch_deg=config.get("pitch_deg", 25.0),
    )
    return compose(cam1.inverse(), cam2)
