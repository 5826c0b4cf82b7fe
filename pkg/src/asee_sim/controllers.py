"""Probe orientation PD control and two-stage contact-force control.

Conventions: the probe z-axis points from the probe tip toward the patient,
so v_tz > 0 moves the probe toward the surface.  Orientation commands are
body angular rates about the probe x/y axes.  The force controller runs in
two latched stages: "landing" servos on the closest depth reading until the
surface crosses the lens-to-tip distance, then "scanning" regulates contact
force around the desired value.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class Stage(enum.Enum):
    LANDING = "landing"
    SCANNING = "scanning"


class NoDepthError(RuntimeError):
    """No depth readings available while still in the landing stage."""


@dataclass(frozen=True)
class OrientationPDConfig:
    k_p: float = 1.5          # 1/s
    k_d: float = 0.05         # unitless
    dt: float = 1.0 / 30.0    # s

    def __post_init__(self):
        if self.k_p <= 0:
            raise ValueError("k_p must be positive")
        if self.k_d < 0:
            raise ValueError("k_d must be nonnegative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class ForceControlConfig:
    w: float = 0.5            # smoothing weight on the new raw velocity
    k_p1: float = 0.8         # 1/s, landing
    k_p2: float = 0.004       # m/(s*N), scanning
    d_threshold: float = 0.150  # m, camera lens to probe tip
    f_desired: float = 3.5    # N

    def __post_init__(self):
        if not 0.0 < self.w < 1.0:
            raise ValueError("w must be in (0, 1)")
        if self.k_p1 <= 0 or self.k_p2 <= 0:
            raise ValueError("gains must be positive")
        if self.d_threshold <= 0:
            raise ValueError("d_threshold must be positive")


@dataclass
class ControllerState:
    prev_ex: float = 0.0
    prev_ey: float = 0.0
    prev_vfz: float = 0.0
    stage: Stage = Stage.LANDING
    initialized: bool = False

    def reset(self):
        self.prev_ex = 0.0
        self.prev_ey = 0.0
        self.prev_vfz = 0.0
        self.stage = Stage.LANDING
        self.initialized = False


def orientation_step(cfg: OrientationPDConfig, state: ControllerState,
                     n_hat) -> tuple[float, float]:
    """PD angular-rate command aligning the probe z-axis with n_hat.

    The error vector is r = z_hat x n_hat = (-n_y, n_x, 0); its components
    are the sines of the misalignment angles projected on the xz/yz planes.
    The derivative term is zero on the first call after a reset.
    """
    n = np.asarray(n_hat, dtype=float)
    if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-6:
        raise ValueError("n_hat must be a unit 3-vector")
    e_x = -n[1]
    e_y = n[0]
    if state.initialized:
        de_x = (e_x - state.prev_ex) / cfg.dt
        de_y = (e_y - state.prev_ey) / cfg.dt
    else:
        de_x = de_y = 0.0
    w_x = cfg.k_p * e_x + cfg.k_d * de_x
    w_y = cfg.k_p * e_y + cfg.k_d * de_y
    state.prev_ex = e_x
    state.prev_ey = e_y
    state.initialized = True
    return w_x, w_y


def stage_update(cfg: ForceControlConfig, state: ControllerState, d_z) -> Stage:
    """Latch landing -> scanning once the closest reading crosses d_threshold."""
    if state.stage is Stage.LANDING and len(d_z) > 0 and min(d_z) < cfg.d_threshold:
        state.stage = Stage.SCANNING
    return state.stage


def force_step(cfg: ForceControlConfig, state: ControllerState,
               d_z, f_measured: float) -> float:
    """Axial velocity command v_tz (positive toward the surface)."""
    if f_measured < 0 or not math.isfinite(f_measured):
        raise ValueError("f_measured must be finite and nonnegative")
    stage_update(cfg, state, d_z)
    if state.stage is Stage.LANDING:
        if len(d_z) == 0:
            raise NoDepthError("no depth readings during landing")
        v_raw = cfg.k_p1 * (min(d_z) - cfg.d_threshold)
    else:
        v_raw = cfg.k_p2 * (cfg.f_desired - f_measured)
    v_fz = cfg.w * v_raw + (1.0 - cfg.w) * state.prev_vfz
    state.prev_vfz = v_fz
    return v_fz
