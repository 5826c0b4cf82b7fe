"""Closed-loop simulation: sense, estimate, control, integrate at 30 Hz.

Step order per tick: render both depth cameras, run the perception pipeline,
compute the orientation and force commands, merge them with the teleop
command into a probe-frame twist, convert to joint velocities, Euler-step the
joints, then refresh the probe pose and contact force. All randomness derives
from the scenario seed plus the step index, so identical scenarios produce
byte-identical logs.

Perception or controller failures degrade gracefully: the orientation and
force commands are zeroed for that step while the teleop command stays live.
The contact model is a spring: force = stiffness times the tip's penetration
below the surface.
"""

from __future__ import annotations

import dataclasses
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .calibration import mount_transforms
from .camera import PosedSurface, SurfaceModel, render_rig
from .controllers import (ControllerState, ForceControlConfig, NoDepthError,
                          OrientationPDConfig, Stage, force_step,
                          orientation_step)
from .geometry import (PointCloud, RigidTransform, Twist, angle_between,
                       compose, save_ply, transform_cloud, unit)
from .kinematics import (JointState, KinematicChain, compose_probe_twist,
                         default_chain, forward_kinematics, integrate_joints,
                         load_chain, twist_to_joint_velocities)
from .pipeline import (MovingAverageFilter, NormalEstimate, NoSupportError,
                       PipelineConfig, Box, RigExtrinsics, run_pipeline)
from .scenario import (SIM_DT, ScenarioConfig, build_rig, place_surface,
                       tilt_pose)

LOG_FLOAT_FORMAT = "%.9g"


@dataclass
class SimState:
    t: float
    joints: JointState
    probe_pose: RigidTransform
    normal: NormalEstimate | None
    force_n: float
    stage: Stage
    last_twist: np.ndarray


@dataclass
class LogRecord:
    t: float
    q: np.ndarray
    pos: np.ndarray
    quat: np.ndarray
    normal: np.ndarray
    err_deg: float
    force_n: float
    stage: str
    twist: np.ndarray


def contact_force(surface: SurfaceModel, probe_tip: np.ndarray,
                  probe_axis: np.ndarray, stiffness: float) -> float:
    """Spring contact: stiffness times the tip's penetration below the surface.

    Penetration is measured along the surface normal; a tip at or above the
    surface yields zero force.
    """
    depth = -float(np.atleast_1d(surface.signed_height(probe_tip))[0])
    return stiffness * max(0.0, depth)


def _overridden(cfg, overrides: dict):
    if not overrides:
        return cfg
    fields = {f.name for f in dataclasses.fields(cfg)}
    unknown = set(overrides) - fields
    if unknown:
        raise ValueError(f"unknown config overrides: {sorted(unknown)}")
    values = {**{f: getattr(cfg, f) for f in fields}, **overrides}
    if "probe_box" in overrides:
        values["probe_box"] = Box(tuple(overrides["probe_box"]["lo"]),
                                  tuple(overrides["probe_box"]["hi"]))
    if "z_crop_range" in values:
        values["z_crop_range"] = tuple(values["z_crop_range"])
    if "region" in values:
        values["region"] = tuple(values["region"])
    return type(cfg)(**values)


class Simulation:
    """Stateful closed-loop simulator for one scenario."""

    def __init__(self, scenario: ScenarioConfig):
        self.scenario = scenario
        self.dt = SIM_DT
        self.chain: KinematicChain = (
            load_chain(scenario.chain_file) if scenario.chain_file else default_chain())
        q0 = np.asarray(scenario.initial_q, dtype=float)
        self.chain.check_q(q0)
        self.anchor = forward_kinematics(self.chain, q0)

        base_dir = getattr(scenario, "_base_dir", None)
        self.surface: PosedSurface = place_surface(scenario.surface, self.anchor, base_dir)
        self._base_placement = self.surface.pose
        self._surface_frame = scenario.surface.get("frame", "tip")
        self._pending_tilts = list(scenario.tilt_schedule)

        rig = build_rig(scenario.rig)
        self.rig = rig
        cam1, cam2 = mount_transforms(rig.lateral_offset_m, rig.back_offset_m,
                                      rig.pitch_deg)
        self.cam1_to_probe = cam1
        self.cam2_to_cam1_true = compose(cam1.inverse(), cam2)
        assumed = self.cam2_to_cam1_true
        if rig.extrinsic_error_deg:
            err = RigidTransform.from_axis_angle(
                np.asarray(rig.extrinsic_error_axis, dtype=float),
                math.radians(rig.extrinsic_error_deg))
            assumed = compose(err, assumed)
        self.extrinsics = RigExtrinsics(cam2_to_cam1=assumed, cam1_to_probe=cam1)

        self.pipeline_cfg = _overridden(PipelineConfig(), scenario.pipeline)
        self.orientation_cfg = _overridden(OrientationPDConfig(), scenario.orientation)
        self.force_cfg = _overridden(ForceControlConfig(), scenario.force)
        self.filter = MovingAverageFilter(self.pipeline_cfg.ma_window)
        self.ctrl = ControllerState()

        self.step_index = 0
        self.last_estimate: NormalEstimate | None = None
        self.last_cloud_world: PointCloud | None = None
        self.paused = False
        self._retract_until = -math.inf

        probe_pose = self.anchor
        tip = probe_pose.t
        axis = probe_pose.rotation()[:, 2]
        f0 = contact_force(self.surface, tip, axis, scenario.stiffness)
        self.state = SimState(t=0.0, joints=JointState(q=q0, qd=np.zeros(self.chain.dof)),
                              probe_pose=probe_pose, normal=None, force_n=f0,
                              stage=self.ctrl.stage, last_twist=np.zeros(6))

    # -- actions -------------------------------------------------------------

    def request_land(self) -> None:
        self._retract_until = -math.inf
        self.ctrl.reset()
        self.filter.reset()

    def request_retract(self, duration_s: float = 1.5) -> None:
        self._retract_until = self.state.t + duration_s
        self.ctrl.reset()
        self.filter.reset()

    # -- stepping ------------------------------------------------------------

    def _apply_tilts(self) -> None:
        while self._pending_tilts and float(self._pending_tilts[0]["t"]) <= self.state.t:
            entry = self._pending_tilts.pop(0)
            self.surface.pose = tilt_pose(entry, self._base_placement, self.anchor,
                                          self._surface_frame, self.state.probe_pose.t)

    def step(self, teleop: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> LogRecord:
        """Advance one control period and return the resulting log record."""
        scen = self.scenario
        self._apply_tilts()
        probe_pose = self.state.probe_pose

        cam1_world = compose(probe_pose, self.cam1_to_probe)
        clouds = render_rig(self.surface, cam1_world, self.cam2_to_cam1_true,
                            self.rig.intrinsics, self.rig.noise_sigma,
                            seed=[scen.seed, self.step_index])

        estimate = None
        cloud = None
        try:
            cloud, estimate = run_pipeline(clouds[0], clouds[1], self.pipeline_cfg,
                                           self.extrinsics, self.filter,
                                           seed=[scen.seed, self.step_index],
                                           timestamp=self.state.t)
            self.last_estimate = estimate
            self.last_cloud_world = transform_cloud(cam1_world, cloud, frame_id="world")
        except (NoSupportError, ValueError):
            estimate = None

        retracting = self.state.t < self._retract_until
        w_nx = w_ny = 0.0
        v_tz = 0.0
        if retracting:
            v_tz = -0.03
        elif estimate is not None:
            if not (scen.defer_orientation_to_contact
                    and self.ctrl.stage is Stage.LANDING):
                w_nx, w_ny = orientation_step(self.orientation_cfg, self.ctrl,
                                              estimate.normal)
            probe_pts = self.extrinsics.cam1_to_probe.apply(cloud.points)
            d_z = probe_pts[:, 2] + self.force_cfg.d_threshold
            try:
                v_tz = force_step(self.force_cfg, self.ctrl, d_z, self.state.force_n)
            except NoDepthError:
                v_tz = 0.0

        v_tx, v_ty, w_nz = (float(x) for x in teleop)
        command = np.array([v_tx, v_ty, v_tz, w_nx, w_ny, w_nz])
        twist = compose_probe_twist(v_tx, v_ty, v_tz, w_nx, w_ny, w_nz, probe_pose)
        qd = twist_to_joint_velocities(self.chain, self.state.joints.q, twist)
        q_new = integrate_joints(self.chain, self.state.joints.q, qd, self.dt)

        self.step_index += 1
        t_new = self.step_index * self.dt
        probe_pose = forward_kinematics(self.chain, q_new)
        tip = probe_pose.t
        axis = probe_pose.rotation()[:, 2]
        force = contact_force(self.surface, tip, axis, scen.stiffness)

        shown = estimate if estimate is not None else self.last_estimate
        normal = shown.normal if shown is not None else np.full(3, np.nan)
        gt_inward = -self.surface.normal_at(tip)[0]
        err_deg = angle_between(axis, gt_inward)

        self.state = SimState(t=t_new, joints=JointState(q=q_new, qd=qd, timestamp=t_new),
                              probe_pose=probe_pose, normal=shown, force_n=force,
                              stage=self.ctrl.stage, last_twist=command)
        return LogRecord(t=t_new, q=q_new.copy(), pos=tip.copy(),
                         quat=probe_pose.q.copy(), normal=np.asarray(normal, dtype=float).copy(),
                         err_deg=err_deg, force_n=force, stage=self.ctrl.stage.value,
                         twist=command)

    def run(self, duration_s: float | None = None) -> list[LogRecord]:
        duration = self.scenario.duration_s if duration_s is None else duration_s
        steps = int(round(duration * 30.0))
        records = []
        for _ in range(steps):
            records.append(self.step(self.scenario.scripted_command(self.state.t)))
        return records


def run_scenario(scenario: ScenarioConfig, cloud_out=None) -> list[LogRecord]:
    """Run a scenario start to finish; optionally export the last fused cloud."""
    sim = Simulation(scenario)
    records = sim.run()
    if cloud_out is not None and sim.last_cloud_world is not None:
        save_ply(sim.last_cloud_world, cloud_out)
    return records


# ---------------------------------------------------------------------------
# log export

def _log_header(dof: int) -> list[str]:
    return (["t"] + [f"q{i}" for i in range(dof)]
            + ["px", "py", "pz", "qw", "qx", "qy", "qz", "nx", "ny", "nz",
               "err_deg", "force_n", "stage", "vtx", "vty", "vtz",
               "wnx", "wny", "wnz"])


def logs_to_csv(records: list[LogRecord]) -> str:
    """Render records as CSV text: header row, 9 significant digits per float."""
    dof = len(records[0].q) if records else 7
    buf = io.StringIO()
    buf.write(",".join(_log_header(dof)) + "\n")
    for r in records:
        values = ([r.t] + list(r.q) + list(r.pos) + list(r.quat) + list(r.normal)
                  + [r.err_deg, r.force_n])
        text = [LOG_FLOAT_FORMAT % v for v in values]
        text.append(r.stage)
        text.extend(LOG_FLOAT_FORMAT % v for v in r.twist)
        buf.write(",".join(text) + "\n")
    return buf.getvalue()


def export_logs(records: list[LogRecord], path) -> None:
    with open(path, "w", newline="") as f:
        f.write(logs_to_csv(records))


def parse_logs_csv(text: str) -> list[LogRecord]:
    lines = text.splitlines()
    if not lines:
        return []
    header = lines[0].strip().split(",")
    dof = sum(1 for h in header if h.startswith("q") and h[1:].isdigit())
    records = []
    for line in lines[1:]:
        parts = line.strip().split(",")
        if not parts or parts == [""]:
            continue
        vals = parts[:1 + dof + 12]
        stage = parts[1 + dof + 12]
        twist = parts[2 + dof + 12:]
        nums = [float(v) for v in vals]
        records.append(LogRecord(
            t=nums[0], q=np.array(nums[1:1 + dof]),
            pos=np.array(nums[1 + dof:4 + dof]),
            quat=np.array(nums[4 + dof:8 + dof]),
            normal=np.array(nums[8 + dof:11 + dof]),
            err_deg=nums[11 + dof], force_n=nums[12 + dof],
            stage=stage, twist=np.array([float(v) for v in twist])))
    return records


def load_logs(path) -> list[LogRecord]:
    with open(path) as f:
        return parse_logs_csv(f.read())
