"""Serial-arm velocity-level kinematics.

Modified Denavit-Hartenberg convention: link transform
RotX(alpha) * TransX(a) * RotZ(theta) * TransZ(d) with theta = q + offset.
The geometric Jacobian is tip-referenced: J @ qdot gives the tip-point
linear velocity stacked over the angular velocity, both in base frame.
Commanded probe-frame twists therefore map to base frame by rotation only
(the probe rotates about its own tip rather than orbiting the base origin).
"""

from __future__ import annotations

import importlib.resources
import math
from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, Twist, compose, quat_from_axis_angle

PINV_RCOND = 1e-6


class LimitViolationError(ValueError):
    """Joint position outside the chain's limits."""


@dataclass(frozen=True)
class KinematicChain:
    mdh: np.ndarray            # (n, 4) rows: a, d, alpha, theta_offset
    flange_to_tip: RigidTransform
    q_lower: np.ndarray        # (n,)
    q_upper: np.ndarray        # (n,)
    qd_max: np.ndarray         # (n,)

    def __post_init__(self):
        mdh = np.asarray(self.mdh, dtype=float)
        if mdh.ndim != 2 or mdh.shape[1] != 4 or mdh.shape[0] < 1:
            raise ValueError("mdh must be (n, 4) with n >= 1")
        object.__setattr__(self, "mdh", mdh)
        for name in ("q_lower", "q_upper", "qd_max"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (mdh.shape[0],):
                raise ValueError(f"{name} must have one entry per joint")
            object.__setattr__(self, name, v)
        if np.any(self.q_lower >= self.q_upper):
            raise ValueError("joint limits must satisfy low < high")
        if np.any(self.qd_max <= 0):
            raise ValueError("velocity limits must be positive")

    @property
    def dof(self) -> int:
        return self.mdh.shape[0]

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise ValueError(f"expected {self.dof} joint angles")
        if np.any(q < self.q_lower) or np.any(q > self.q_upper):
            raise LimitViolationError("joint position outside limits")
        return q


@dataclass
class JointState:
    q: np.ndarray
    qd: np.ndarray
    timestamp: float = 0.0


def load_chain(path) -> KinematicChain:
    rows = []
    with open(path) as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append([float(x) for x in line.split()])
    if len(rows) < 2:
        raise ValueError("chain file needs at least one joint line and a flange line")
    flange = rows[-1]
    if len(flange) != 7:
        raise ValueError("flange line must be: tx ty tz qw qx qy qz")
    joints = np.array(rows[:-1], dtype=float)
    if joints.shape[1] != 7:
        raise ValueError("joint lines must be: a d alpha theta_offset q_min q_max qd_max")
    return KinematicChain(
        mdh=joints[:, :4],
        flange_to_tip=RigidTransform(q=np.array(flange[3:]), t=np.array(flange[:3])),
        q_lower=joints[:, 4],
        q_upper=joints[:, 5],
        qd_max=joints[:, 6],
    )


def default_chain() -> KinematicChain:
    ref = importlib.resources.files("asee_sim").joinpath("data/panda_chain.txt")
    with importlib.resources.as_file(ref) as path:
        return load_chain(path)


def _link_halves(a, d, alpha, theta):
    pre = RigidTransform(q=quat_from_axis_angle([1, 0, 0], alpha), t=np.array([a, 0.0, 0.0]))
    post = RigidTransform(q=quat_from_axis_angle([0, 0, 1], theta), t=np.array([0.0, 0.0, d]))
    return pre, post


def _frames(chain: KinematicChain, q):
    """Per joint: (axis frame, full frame after the joint)."""
    T = RigidTransform.identity()
    axes, origins = [], []
    for (a, d, alpha, off), qi in zip(chain.mdh, q):
        pre, post = _link_halves(a, d, alpha, qi + off)
        T_axis = compose(T, pre)
        R = T_axis.rotation()
        axes.append(R[:, 2])
        origins.append(T_axis.t)
        T = compose(T_axis, post)
    return T, axes, origins


def forward_kinematics(chain: KinematicChain, q) -> RigidTransform:
    q = chain.check_q(q)
    T, _, _ = _frames(chain, q)
    return compose(T, chain.flange_to_tip)


def geometric_jacobian(chain: KinematicChain, q) -> np.ndarray:
    q = chain.check_q(q)
    T, axes, origins = _frames(chain, q)
    p_tip = compose(T, chain.flange_to_tip).t
    J = np.zeros((6, chain.dof))
    for i, (z, p) in enumerate(zip(axes, origins)):
        J[:3, i] = np.cross(z, p_tip - p)
        J[3:, i] = z
    return J


def pseudoinverse(J: np.ndarray) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    U, s, Vt = np.linalg.svd(J, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((J.shape[1], J.shape[0]))
    inv = np.where(s >= PINV_RCOND * s[0], 1.0 / np.where(s > 0, s, 1.0), 0.0)
    return (Vt.T * inv) @ U.T


def twist_to_joint_velocities(chain: KinematicChain, q, base_twist: Twist) -> np.ndarray:
    q = chain.check_q(q)
    J = geometric_jacobian(chain, q)
    qd = pseudoinverse(J) @ base_twist.as_vector()
    ratios = np.abs(qd) / chain.qd_max
    worst = ratios.max() if ratios.size else 0.0
    if worst > 1.0:
        qd = qd / worst
    return qd


def compose_probe_twist(v_tx: float, v_ty: float, v_tz: float,
                        w_nx: float, w_ny: float, w_nz: float,
                        tip_pose: RigidTransform) -> Twist:
    """Assemble the commanded probe-frame twist and express it in base frame.

    The Jacobian above is tip-referenced, so the probe-frame components map
    through the tip rotation alone; a pure angular command leaves the tip
    point stationary.
    """
    body = np.array([v_tx, v_ty, v_tz, w_nx, w_ny, w_nz], dtype=float)
    if not np.all(np.isfinite(body)):
        raise ValueError("twist components must be finite")
    R = tip_pose.rotation()
    return Twist(linear=R @ body[:3], angular=R @ body[3:])


def integrate_joints(chain: KinematicChain, q, qd, dt: float) -> np.ndarray:
    """Explicit Euler step clamped to the position limits (hard stops)."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    return np.clip(q + qd * dt, chain.q_lower, chain.q_upper)
