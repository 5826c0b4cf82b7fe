"""Scenario definitions: surface, rig, controller gains, schedule, seeds.

A scenario is a plain JSON-serializable description of one simulation run.
Nested surface/rig/controller sections stay as dicts here; they are turned
into live objects by the runtime when a simulation starts.

Surface coordinates may be expressed in the world frame or in the probe-tip
frame at t=0 (``frame: "tip"``, the default), which keeps scenario files
independent of the arm's home configuration.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .camera import (HeightfieldSurface, MeshSurface, PinholeIntrinsics,
                     PlaneSurface, PosedSurface, SphereSurface, SurfaceModel,
                     load_heightfield_csv, load_obj)
from .geometry import RigidTransform, compose

HOME_Q = (0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785)

SIM_RATE_HZ = 30.0
SIM_DT = 1.0 / SIM_RATE_HZ

SEED_ENV_VAR = "ASEE_SIM_SEED"

_MODES = ("autonomous_land", "teleop")


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    surface: dict = field(default_factory=lambda: {
        "variant": "plane", "point": [0.0, 0.0, 0.16], "normal": [0.0, 0.0, -1.0]})
    tilt_schedule: list = field(default_factory=list)
    rig: dict = field(default_factory=dict)
    chain_file: str | None = None
    pipeline: dict = field(default_factory=dict)
    orientation: dict = field(default_factory=dict)
    force: dict = field(default_factory=dict)
    stiffness: float = 500.0
    initial_q: list = field(default_factory=lambda: list(HOME_Q))
    duration_s: float = 10.0
    mode: str = "autonomous_land"
    teleop_script: list = field(default_factory=list)
    defer_orientation_to_contact: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.stiffness < 0:
            raise ValueError("stiffness must be non-negative")
        times = [float(e["t"]) for e in self.tilt_schedule]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("tilt_schedule times must be strictly increasing")
        for entry in self.teleop_script:
            if float(entry.get("t_end", math.inf)) <= float(entry.get("t_start", 0.0)):
                raise ValueError("teleop_script entries need t_end > t_start")

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "ScenarioConfig":
        fields = {f.name for f in dataclasses.fields(ScenarioConfig)}
        unknown = set(data) - fields
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        cfg = ScenarioConfig(**data)
        env = os.environ.get(SEED_ENV_VAR)
        if env is not None:
            cfg.seed = int(env)
        return cfg

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    # -- teleop script ------------------------------------------------------

    def scripted_command(self, t: float) -> tuple[float, float, float]:
        """Teleop command (vx, vy, wz) active at time t; later entries win."""
        cmd = (0.0, 0.0, 0.0)
        for entry in self.teleop_script:
            if float(entry.get("t_start", 0.0)) <= t < float(entry.get("t_end", math.inf)):
                cmd = (float(entry.get("vx", 0.0)), float(entry.get("vy", 0.0)),
                       float(entry.get("wz", 0.0)))
        return cmd


def load_scenario(path) -> ScenarioConfig:
    with open(path) as f:
        return ScenarioConfig.from_dict(json.load(f))


# ---------------------------------------------------------------------------
# rig configuration

@dataclass(frozen=True)
class RigConfig:
    intrinsics: PinholeIntrinsics
    lateral_offset_m: float = 0.06
    back_offset_m: float = 0.15
    pitch_deg: float = 25.0
    noise_sigma: float = 0.0
    extrinsic_error_deg: float = 0.0
    extrinsic_error_axis: tuple = (0.0, 1.0, 0.0)


def build_rig(rig: dict) -> RigConfig:
    intr_keys = {"width", "height", "fx", "fy", "cx", "cy"}
    if intr_keys & set(rig):
        intr = PinholeIntrinsics(
            fx=float(rig["fx"]), fy=float(rig["fy"]),
            cx=float(rig["cx"]), cy=float(rig["cy"]),
            width=int(rig["width"]), height=int(rig["height"]))
    else:
        intr = PinholeIntrinsics.default()
    return RigConfig(
        intrinsics=intr,
        lateral_offset_m=float(rig.get("lateral_offset_m", 0.06)),
        back_offset_m=float(rig.get("back_offset_m", 0.15)),
        pitch_deg=float(rig.get("pitch_deg", 25.0)),
        noise_sigma=float(rig.get("noise_sigma", 0.0)),
        extrinsic_error_deg=float(rig.get("extrinsic_error_deg", 0.0)),
        extrinsic_error_axis=tuple(rig.get("extrinsic_error_axis", (0.0, 1.0, 0.0))),
    )


# ---------------------------------------------------------------------------
# surface construction

def build_base_surface(spec: dict, base_dir=None) -> SurfaceModel:
    """Instantiate the analytic/mesh surface described by a scenario dict."""
    variant = spec.get("variant")
    if variant == "plane":
        return PlaneSurface(spec["point"], spec["normal"])
    if variant == "sphere":
        return SphereSurface(spec["center"], float(spec["radius"]))
    if variant == "heightfield":
        if "file" in spec:
            return load_heightfield_csv(_resolve(spec["file"], base_dir))
        return HeightfieldSurface(spec["z_grid"], float(spec["cell_size"]),
                                  origin=spec.get("origin", (0.0, 0.0)))
    if variant == "mesh":
        if "file" in spec:
            return load_obj(_resolve(spec["file"], base_dir))
        return MeshSurface(spec["vertices"], spec["faces"])
    raise ValueError(f"unknown surface variant: {variant!r}")


def _resolve(path, base_dir):
    if base_dir is None or os.path.isabs(path):
        return path
    return os.path.join(base_dir, path)


def place_surface(spec: dict, anchor: RigidTransform, base_dir=None) -> PosedSurface:
    """Build the surface and pose it in the world.

    ``anchor`` is the probe-tip pose at t=0; surface coordinates given in the
    tip frame (the default) are mapped through it so a plane at local
    z = +0.16 sits 16 cm ahead of the probe regardless of arm configuration.
    """
    base = build_base_surface(spec, base_dir)
    local_pose = RigidTransform.identity()
    if "pose" in spec:
        p = spec["pose"]
        local_pose = RigidTransform(np.asarray(p["quaternion_wxyz"], dtype=float),
                                    np.asarray(p["translation"], dtype=float))
    frame = spec.get("frame", "tip")
    if frame == "tip":
        placement = compose(anchor, local_pose)
    elif frame == "world":
        placement = local_pose
    else:
        raise ValueError(f"unknown surface frame: {frame!r}")
    return PosedSurface(base, placement)


def tilt_pose(entry: dict, base_placement: RigidTransform, anchor: RigidTransform,
              frame: str, tip_position: np.ndarray) -> RigidTransform:
    """World pose realizing one tilt-schedule entry.

    Each entry re-orients the surface from its original placement by a
    rotation of ``angle_deg`` about ``axis`` through ``pivot``. Axis and an
    explicit pivot are read in the surface's declared frame; the string pivot
    ``"tip"`` resolves to the probe tip's position when the entry fires, which
    preserves the tip's distance to the surface across the switch.
    """
    axis = np.asarray(entry["axis"], dtype=float)
    angle = math.radians(float(entry["angle_deg"]))
    if frame == "tip":
        axis = anchor.rotation() @ axis
    pivot = entry.get("pivot", "tip")
    if isinstance(pivot, str):
        if pivot != "tip":
            raise ValueError(f"unknown pivot: {pivot!r}")
        pivot_w = np.asarray(tip_position, dtype=float)
    else:
        pivot_w = np.asarray(pivot, dtype=float)
        if frame == "tip":
            pivot_w = anchor.apply(pivot_w)
    rot = RigidTransform.from_axis_angle(axis, angle)
    about_pivot = RigidTransform(rot.q, pivot_w - rot.rotation() @ pivot_w)
    return compose(about_pivot, base_placement)
