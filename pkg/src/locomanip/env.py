"""Desk-scale loco-manipulation simulator.

A deliberately small stand-in for full rigid-body physics: the floating
base follows first-order velocity dynamics, the four legs are abstract
height joints with synthetic contact, and the 6-DoF arm tracks joint
targets under a rate limit with exact forward kinematics.  The model keeps
the couplings that make whole-body control hard:

- the base only moves when the legs actually step (propulsion scales with
  how well the leg heights track the commanded swing profile),
- stepping shakes the torso (roll/pitch/height follow leg asymmetry), which
  displaces the end-effector in the control frame and must be compensated
  by the arm,
- lifting more than two feet drops the torso and quickly terminates the
  episode, so uncoordinated stepping is risky.

Everything is deterministic given the seed: all randomness flows through
numpy Generators, and the per-step dynamics are a single compiled kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .accel import jit_kernel
from .arm import DEFAULT_AXES, DEFAULT_OFFSETS, ArmModel, fk_kernel, jacobian_kernel
from .commands import Twist
from .lie import (
    Pose,
    quat_conjugate,
    quat_from_rpy,
    quat_mul,
    quat_rotate,
)

NUM_FEET = 4
ARM_JOINTS = 6
HISTORY_STEPS = 4
AIR_HIST_LEN = 3
MAX_PUSH_WINDOWS = 8

# privileged block layout: contacts 4 + friction 4 + air time 4 + base wrench 6
# + push velocity 6 + torso mass 1 + ee wrench 6 + ee mass 1
PRIVILEGED_DIM = 32
COMMAND_DIM = 20


@dataclass
class ActionConfig:
    """Action scaling and actuator limits."""

    sigma_a: float = 0.25  # fixed std used to normalize actions before clamping
    control_dt: float = 0.02  # 50 Hz
    arm_rate_limit: float = 4.0  # rad/s
    leg_rate_limit: float = 1.0  # m/s (leg DOF are heights)
    leg_range: float = 0.16  # m
    arm_limit: float = 2.8  # rad, symmetric
    joint_stiffness: float = 25.0  # torque proxy: stiffness * (target - actual)

    def __post_init__(self):
        if self.sigma_a <= 0.0:
            raise ValueError("sigma_a must be positive")
        if self.control_dt <= 0.0:
            raise ValueError("control_dt must be positive")


@dataclass
class PhysicsConfig:
    """Constants of the toy dynamics."""

    z_nominal: float = 0.35
    base_mass: float = 40.0
    tau_base: float = 0.25  # planar velocity time constant
    tau_z: float = 0.08
    tau_att: float = 0.12  # roll/pitch relaxation
    k_tilt: float = 1.5  # rad of attitude target per meter of leg asymmetry
    k_crouch: float = 0.6  # torso drop per meter of mean leg lift
    gait_sigma_sq: float = 0.004  # propulsion quality kernel width
    fall_speed: float = 0.8  # m/s height collapse with < 2 feet in contact
    contact_eps: float = 0.004
    terminate_z: float = 0.20
    terminate_roll_pitch: float = 0.6
    soft_z: float = 0.28  # undesired-contact proxy thresholds
    soft_roll_pitch: float = 0.45
    mount_offset: tuple = (0.22, 0.0, 0.05)
    cuboid_half_extents: tuple = (0.30, 0.20, 0.15)
    wrench_ang_gain: float = 0.02  # attitude offset per Nm of external torque
    ee_compliance: float = 0.002  # arm joint drift per N through the jacobian
    slip_friction_scale: float = 1.0


@dataclass
class DisturbanceConfig:
    """Per-episode disturbance ranges; every sample stays inside its interval."""

    friction_static: tuple = (0.5, 1.2)
    friction_dynamic: tuple = (0.3, 1.2)
    torso_mass: tuple = (-10.0, 10.0)  # kg, additive
    ee_mass: tuple = (0.0, 1.8)  # kg
    torso_force: tuple = (-50.0, 50.0)  # N
    torso_torque: tuple = (-20.0, 20.0)  # Nm
    ee_force: tuple = (-3.0, 3.0)  # N
    ee_torque: tuple = (0.0, 0.0)  # Nm
    push_lin_vel: tuple = (-0.2, 0.2)  # m/s, added to the *measured* base velocity
    push_ang_vel: tuple = (-0.2, 0.2)  # rad/s
    push_interval: tuple = (2.0, 6.0)  # s between pulse starts
    push_duration: tuple = (0.5, 2.0)  # s

    def ranges(self) -> dict:
        return {f: getattr(self, f) for f in (
            "friction_static", "friction_dynamic", "torso_mass", "ee_mass",
            "torso_force", "torso_torque", "ee_force", "ee_torque",
            "push_lin_vel", "push_ang_vel")}


@dataclass
class EnvConfig:
    num_envs: int = 64
    episode_s: float = 8.0
    joints_per_leg: int = 1  # 1 at desk scale; 3 restores the 18-DoF layout
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    action: ActionConfig = field(default_factory=ActionConfig)
    disturbances: DisturbanceConfig = field(default_factory=DisturbanceConfig)

    @property
    def n_leg_dof(self) -> int:
        return NUM_FEET * self.joints_per_leg

    @property
    def num_joints(self) -> int:
        return self.n_leg_dof + ARM_JOINTS


@dataclass
class EpisodeDisturbances:
    """One episode's worth of randomized quantities for a single robot."""

    friction_static: np.ndarray
    friction_dynamic: np.ndarray
    torso_mass: float
    ee_mass: float
    base_wrench: np.ndarray  # force xyz + torque xyz
    ee_wrench: np.ndarray
    push_start: np.ndarray  # (MAX_PUSH_WINDOWS,)
    push_end: np.ndarray
    push_vel: np.ndarray  # (MAX_PUSH_WINDOWS, 6) lin+ang

    def push_velocity_at(self, t: float) -> np.ndarray:
        active = (t >= self.push_start) & (t < self.push_end)
        if not active.any():
            return np.zeros(6)
        return self.push_vel[active].sum(axis=0)


def randomize_episode(rng: np.random.Generator, cfg: DisturbanceConfig,
                      horizon_s: float = 8.0) -> EpisodeDisturbances:
    """Sample all per-episode disturbances plus a schedule of push pulses."""
    def u(rg, size=None):
        return rng.uniform(rg[0], rg[1], size=size)

    starts = np.full(MAX_PUSH_WINDOWS, np.inf)
    ends = np.full(MAX_PUSH_WINDOWS, np.inf)
    vels = np.zeros((MAX_PUSH_WINDOWS, 6))
    t = 0.0
    for k in range(MAX_PUSH_WINDOWS):
        t += float(u(cfg.push_interval))
        if t >= horizon_s:
            break
        dur = float(u(cfg.push_duration))
        starts[k] = t
        ends[k] = t + dur
        vels[k, :3] = u(cfg.push_lin_vel, 3)
        vels[k, 3:] = u(cfg.push_ang_vel, 3)
        t += dur
    return EpisodeDisturbances(
        friction_static=u(cfg.friction_static, NUM_FEET),
        friction_dynamic=u(cfg.friction_dynamic, NUM_FEET),
        torso_mass=float(u(cfg.torso_mass)),
        ee_mass=float(u(cfg.ee_mass)),
        base_wrench=np.r_[u(cfg.torso_force, 3), u(cfg.torso_torque, 3)],
        ee_wrench=np.r_[u(cfg.ee_force, 3), u(cfg.ee_torque, 3)],
        push_start=starts,
        push_end=ends,
        push_vel=vels,
    )


@dataclass
class RobotState:
    """Full single-robot state snapshot; carries every symbol the reward
    functions consume."""

    base_pos: np.ndarray
    base_rpy: np.ndarray
    base_vel_xy: np.ndarray  # planar velocity in the yaw-aligned frame
    base_vz: float
    base_rpy_rate: np.ndarray
    joints: np.ndarray
    joint_vel: np.ndarray
    joint_targets: np.ndarray
    joint_torque: np.ndarray
    leg_heights: np.ndarray
    contacts: np.ndarray  # bool (4,)
    forces: np.ndarray
    slip_speed: np.ndarray
    air_time: np.ndarray
    contact_time: np.ndarray
    air_hist: np.ndarray  # (4, 3) completed swing intervals, oldest first
    contact_hist: np.ndarray
    air_hist_n: np.ndarray
    contact_hist_n: np.ndarray
    new_contact: np.ndarray
    air_at_contact: np.ndarray
    ee_pos_ctrl: np.ndarray
    ee_quat_ctrl: np.ndarray
    episode_t: float = 0.0
    terminated: bool = False
    n_undesired_robot: float = 0.0
    n_undesired_arm: float = 0.0
    n_leg_dof: int = NUM_FEET

    @property
    def base_quat(self) -> np.ndarray:
        return quat_from_rpy(self.base_rpy[0], self.base_rpy[1], self.base_rpy[2])

    @property
    def base_pose(self) -> Pose:
        return Pose(self.base_pos, self.base_quat)

    @property
    def base_twist(self) -> Twist:
        yaw = self.base_rpy[2]
        c, s = math.cos(yaw), math.sin(yaw)
        vx, vy = self.base_vel_xy
        return Twist(
            np.array([c * vx - s * vy, s * vx + c * vy, self.base_vz]),
            self.base_rpy_rate.copy(),
        )

    @property
    def arm_joints(self) -> np.ndarray:
        return self.joints[self.n_leg_dof:]


# physics constant vector layout for the step kernel
_P_KEYS = (
    "dt", "tau_base", "tau_z", "tau_att", "k_tilt", "k_crouch", "gait_sigma_sq",
    "fall_speed", "z_nominal", "terminate_z", "terminate_roll_pitch",
    "contact_eps", "base_mass", "gravity", "arm_rate_limit", "leg_rate_limit",
    "wrench_ang_gain", "ee_compliance", "soft_z", "soft_roll_pitch",
    "mount_x", "mount_y", "mount_z", "cub_x", "cub_y", "cub_z",
    "episode_s", "joint_stiffness", "slip_friction_scale",
)
_P = {k: i for i, k in enumerate(_P_KEYS)}


def physics_vector(cfg: EnvConfig, dt: float | None = None) -> np.ndarray:
    p = cfg.physics
    a = cfg.action
    vals = {
        "dt": dt if dt is not None else a.control_dt,
        "tau_base": p.tau_base, "tau_z": p.tau_z, "tau_att": p.tau_att,
        "k_tilt": p.k_tilt, "k_crouch": p.k_crouch,
        "gait_sigma_sq": p.gait_sigma_sq, "fall_speed": p.fall_speed,
        "z_nominal": p.z_nominal, "terminate_z": p.terminate_z,
        "terminate_roll_pitch": p.terminate_roll_pitch,
        "contact_eps": p.contact_eps, "base_mass": p.base_mass, "gravity": 9.81,
        "arm_rate_limit": a.arm_rate_limit, "leg_rate_limit": a.leg_rate_limit,
        "wrench_ang_gain": p.wrench_ang_gain, "ee_compliance": p.ee_compliance,
        "soft_z": p.soft_z, "soft_roll_pitch": p.soft_roll_pitch,
        "mount_x": p.mount_offset[0], "mount_y": p.mount_offset[1],
        "mount_z": p.mount_offset[2],
        "cub_x": p.cuboid_half_extents[0], "cub_y": p.cuboid_half_extents[1],
        "cub_z": p.cuboid_half_extents[2],
        "episode_s": cfg.episode_s, "joint_stiffness": a.joint_stiffness,
        "slip_friction_scale": p.slip_friction_scale,
    }
    return np.array([vals[k] for k in _P_KEYS], dtype=np.float64)


@jit_kernel
def step_kernel(
    # mutable state (N, ...)
    base_pos, base_rpy, base_vel_xy, base_vz, base_rpy_rate,
    joints, joint_vel, joint_torque, leg_heights,
    contacts, forces, slip_speed, air_time, contact_time,
    air_hist, contact_hist, air_hist_n, contact_hist_n,
    new_contact, air_at_contact, episode_t,
    ee_pos_ctrl, ee_quat_ctrl, gait_quality,
    terminated, truncated, n_robot, n_arm,
    # inputs
    targets, base_cmd, foot_cmd, nan_action,
    friction, base_wrench, ee_wrench, torso_mass, ee_mass,
    # static
    q_lo, q_hi, axes, offsets, jpl, phys,
):
    """Advance every robot by one control step.  Termination and truncation
    flags are written, but resets are the caller's job."""
    n = base_pos.shape[0]
    n_joints = joints.shape[1]
    n_leg = NUM_FEET * jpl
    dt = phys[0]
    for i in range(n):
        # --- joints track targets under rate limits ---
        q_old = joints[i].copy()
        for j in range(n_joints):
            rate = phys[15] if j < n_leg else phys[14]
            delta = targets[i, j] - joints[i, j]
            if delta > rate * dt:
                delta = rate * dt
            elif delta < -rate * dt:
                delta = -rate * dt
            qn = joints[i, j] + delta
            if qn < q_lo[j]:
                qn = q_lo[j]
            elif qn > q_hi[j]:
                qn = q_hi[j]
            joints[i, j] = qn
        # external end-effector wrench pulls the arm through its jacobian
        comp = phys[17]
        if comp > 0.0:
            jac = jacobian_kernel(joints[i, n_leg:], axes, offsets)
            for j in range(ARM_JOINTS):
                drift = 0.0
                for k in range(3):
                    drift += jac[k, j] * ee_wrench[i, k] + jac[3 + k, j] * ee_wrench[i, 3 + k]
                qn = joints[i, n_leg + j] + comp * drift * dt
                if qn < q_lo[n_leg + j]:
                    qn = q_lo[n_leg + j]
                elif qn > q_hi[n_leg + j]:
                    qn = q_hi[n_leg + j]
                joints[i, n_leg + j] = qn
        for j in range(n_joints):
            joint_vel[i, j] = (joints[i, j] - q_old[j]) / dt
            joint_torque[i, j] = phys[27] * (targets[i, j] - joints[i, j])

        # --- feet: heights, contacts, interval bookkeeping ---
        for f in range(NUM_FEET):
            leg_heights[i, f] = joints[i, f * jpl]
        n_c = 0
        for f in range(NUM_FEET):
            in_contact = leg_heights[i, f] <= phys[11]
            was = contacts[i, f] > 0.5
            new_contact[i, f] = 0.0
            air_at_contact[i, f] = 0.0
            if in_contact:
                n_c += 1
                if not was:
                    # touchdown: archive the completed swing interval
                    new_contact[i, f] = 1.0
                    air_at_contact[i, f] = air_time[i, f]
                    for k in range(AIR_HIST_LEN - 1):
                        air_hist[i, f, k] = air_hist[i, f, k + 1]
                    air_hist[i, f, AIR_HIST_LEN - 1] = air_time[i, f]
                    if air_hist_n[i, f] < AIR_HIST_LEN:
                        air_hist_n[i, f] += 1
                    air_time[i, f] = 0.0
                    contact_time[i, f] = 0.0
                contact_time[i, f] += dt
            else:
                if was:
                    # liftoff: archive the completed stance interval
                    for k in range(AIR_HIST_LEN - 1):
                        contact_hist[i, f, k] = contact_hist[i, f, k + 1]
                    contact_hist[i, f, AIR_HIST_LEN - 1] = contact_time[i, f]
                    if contact_hist_n[i, f] < AIR_HIST_LEN:
                        contact_hist_n[i, f] += 1
                    contact_time[i, f] = 0.0
                    air_time[i, f] = 0.0
                air_time[i, f] += dt
            contacts[i, f] = 1.0 if in_contact else 0.0

        # --- propulsion quality: legs must track the commanded swing profile ---
        sq = 0.0
        for f in range(NUM_FEET):
            d = leg_heights[i, f] - foot_cmd[i, f]
            sq += d * d
        g_q = math.exp(-sq / phys[6])
        gait_quality[i] = g_q

        # --- planar base dynamics in the yaw frame ---
        mass = phys[12] + torso_mass[i] + ee_mass[i]
        yaw = base_rpy[i, 2]
        cy = math.cos(yaw)
        sy = math.sin(yaw)
        fx_yaw = cy * base_wrench[i, 0] + sy * base_wrench[i, 1]
        fy_yaw = -sy * base_wrench[i, 0] + cy * base_wrench[i, 1]
        base_vel_xy[i, 0] += dt / phys[1] * (g_q * base_cmd[i, 0] - base_vel_xy[i, 0]) \
            + dt * fx_yaw / mass
        base_vel_xy[i, 1] += dt / phys[1] * (g_q * base_cmd[i, 1] - base_vel_xy[i, 1]) \
            + dt * fy_yaw / mass
        yaw_rate = base_rpy_rate[i, 2]
        yaw_rate += dt / phys[1] * (g_q * base_cmd[i, 2] - yaw_rate) \
            + dt * base_wrench[i, 5] / (0.5 * mass)
        base_rpy_rate[i, 2] = yaw_rate

        # --- attitude wobble driven by leg asymmetry ---
        pitch_asym = 0.5 * ((leg_heights[i, 0] + leg_heights[i, 1])
                            - (leg_heights[i, 2] + leg_heights[i, 3]))
        roll_asym = 0.5 * ((leg_heights[i, 0] + leg_heights[i, 2])
                           - (leg_heights[i, 1] + leg_heights[i, 3]))
        roll_t = phys[4] * roll_asym + phys[16] * base_wrench[i, 3]
        pitch_t = phys[4] * pitch_asym + phys[16] * base_wrench[i, 4]
        roll_rate = (roll_t - base_rpy[i, 0]) / phys[3]
        pitch_rate = (pitch_t - base_rpy[i, 1]) / phys[3]
        base_rpy[i, 0] += roll_rate * dt
        base_rpy[i, 1] += pitch_rate * dt
        base_rpy[i, 2] += yaw_rate * dt
        base_rpy_rate[i, 0] = roll_rate
        base_rpy_rate[i, 1] = pitch_rate

        # --- torso height: supported only with two or more feet down ---
        z_old = base_pos[i, 2]
        if n_c >= 2:
            mean_h = 0.25 * (leg_heights[i, 0] + leg_heights[i, 1]
                             + leg_heights[i, 2] + leg_heights[i, 3])
            z_t = phys[8] - phys[5] * mean_h
            z_new = z_old + dt / phys[2] * (z_t - z_old)
        else:
            z_new = z_old - phys[7] * dt
        base_pos[i, 2] = z_new
        base_vz[i] = (z_new - z_old) / dt

        # --- world position ---
        vx, vy = base_vel_xy[i, 0], base_vel_xy[i, 1]
        base_pos[i, 0] += dt * (cy * vx - sy * vy)
        base_pos[i, 1] += dt * (sy * vx + cy * vy)

        # --- synthetic foot forces and slip ---
        weight = mass * phys[13]
        v_norm = math.sqrt(vx * vx + vy * vy)
        mu = 0.25 * (friction[i, 0] + friction[i, 1] + friction[i, 2] + friction[i, 3])
        slip_fric = 1.4 - mu
        if slip_fric < 0.2:
            slip_fric = 0.2
        elif slip_fric > 1.0:
            slip_fric = 1.0
        for f in range(NUM_FEET):
            if contacts[i, f] > 0.5:
                forces[i, f] = weight / n_c
                slip_speed[i, f] = v_norm * (1.0 - g_q) * slip_fric * phys[28]
            else:
                forces[i, f] = 0.0
                slip_speed[i, f] = 0.0

        # --- end-effector pose, world then control frame ---
        q_wb = quat_from_rpy(base_rpy[i, 0], base_rpy[i, 1], base_rpy[i, 2])
        ee_p_m, ee_q_m = fk_kernel(joints[i, n_leg:], axes, offsets)
        ee_base = np.empty(3)
        ee_base[0] = phys[20] + ee_p_m[0]
        ee_base[1] = phys[21] + ee_p_m[1]
        ee_base[2] = phys[22] + ee_p_m[2]
        ee_world = base_pos[i] + quat_rotate(q_wb, ee_base)
        ee_world_q = quat_mul(q_wb, ee_q_m)
        q_wc = quat_from_rpy(0.0, 0.0, base_rpy[i, 2])
        rel = np.empty(3)
        rel[0] = ee_world[0] - base_pos[i, 0]
        rel[1] = ee_world[1] - base_pos[i, 1]
        rel[2] = ee_world[2] - phys[8]
        ee_pos_ctrl[i] = quat_rotate(quat_conjugate(q_wc), rel)
        ee_quat_ctrl[i] = quat_mul(quat_conjugate(q_wc), ee_world_q)

        # --- undesired contact proxies ---
        cnt = 0.0
        if base_pos[i, 2] < phys[18]:
            cnt += 1.0
        if abs(base_rpy[i, 0]) > phys[19] or abs(base_rpy[i, 1]) > phys[19]:
            cnt += 1.0
        n_robot[i] = cnt
        inside = (abs(ee_base[0]) <= phys[23] and abs(ee_base[1]) <= phys[24]
                  and abs(ee_base[2] - 0.0) <= phys[25])
        n_arm[i] = 1.0 if inside else 0.0

        # --- termination / truncation ---
        episode_t[i] += dt
        term = (base_pos[i, 2] < phys[9]
                or abs(base_rpy[i, 0]) > phys[10]
                or abs(base_rpy[i, 1]) > phys[10]
                or nan_action[i] > 0.5)
        terminated[i] = 1.0 if term else 0.0
        truncated[i] = 1.0 if (episode_t[i] >= phys[26] and not term) else 0.0


@jit_kernel
def ee_pose_kernel(idx, base_pos, base_rpy, joints, n_leg, mount, axes, offsets,
                   z_nominal, ee_pos_ctrl, ee_quat_ctrl):
    """Recompute the control-frame end-effector pose for selected robots."""
    for k in range(idx.shape[0]):
        i = idx[k]
        q_wb = quat_from_rpy(base_rpy[i, 0], base_rpy[i, 1], base_rpy[i, 2])
        ee_p_m, ee_q_m = fk_kernel(joints[i, n_leg:], axes, offsets)
        ee_base = mount + ee_p_m
        ee_world = base_pos[i] + quat_rotate(q_wb, ee_base)
        ee_world_q = quat_mul(q_wb, ee_q_m)
        q_wc = quat_from_rpy(0.0, 0.0, base_rpy[i, 2])
        rel = np.empty(3)
        rel[0] = ee_world[0] - base_pos[i, 0]
        rel[1] = ee_world[1] - base_pos[i, 1]
        rel[2] = ee_world[2] - z_nominal
        ee_pos_ctrl[i] = quat_rotate(quat_conjugate(q_wc), rel)
        ee_quat_ctrl[i] = quat_mul(quat_conjugate(q_wc), ee_world_q)


def apply_action(joints: np.ndarray, action: np.ndarray, cfg: ActionConfig,
                 q_lo: np.ndarray | None = None, q_hi: np.ndarray | None = None) -> np.ndarray:
    """Joint targets from residual actions: current positions plus the
    normalized, clamped offset; saturated to the joint limits."""
    action = np.asarray(action, dtype=np.float64)
    if action.shape != np.shape(joints):
        raise ValueError(f"action shape {action.shape} does not match joints")
    if np.isnan(action).any():
        raise FloatingPointError("NaN action")
    offset = np.clip(action / cfg.sigma_a, -1.0, 1.0)
    targets = np.asarray(joints, dtype=np.float64) + offset
    if q_lo is not None:
        targets = np.clip(targets, q_lo, q_hi)
    return targets


@dataclass
class StepTargets:
    """Everything the dynamics needs for one step besides the state."""

    joint_targets: np.ndarray
    base_lin_cmd: np.ndarray = field(default_factory=lambda: np.zeros(2))
    base_ang_cmd: float = 0.0
    foot_height_cmd: np.ndarray = field(default_factory=lambda: np.zeros(4))


class ToyVecEnv:
    """Vectorized batch of independent robots sharing one compiled step."""

    def __init__(self, cfg: EnvConfig, rng: np.random.Generator,
                 arm: ArmModel | None = None):
        self.cfg = cfg
        self.rng = rng
        self.arm = arm if arm is not None else ArmModel()
        n = cfg.num_envs
        a = cfg.num_joints
        self.n = n
        self.n_joints = a
        self.n_leg_dof = cfg.n_leg_dof
        self.phys = physics_vector(cfg)
        self.q_lo, self.q_hi = self._joint_limits()
        self.sigma_a = np.full(a, cfg.action.sigma_a)

        self.base_pos = np.zeros((n, 3))
        self.base_rpy = np.zeros((n, 3))
        self.base_vel_xy = np.zeros((n, 2))
        self.base_vz = np.zeros(n)
        self.base_rpy_rate = np.zeros((n, 3))
        self.joints = np.zeros((n, a))
        self.joint_vel = np.zeros((n, a))
        self.joint_torque = np.zeros((n, a))
        self.joint_targets = np.zeros((n, a))
        self.leg_heights = np.zeros((n, NUM_FEET))
        self.contacts = np.ones((n, NUM_FEET))
        self.forces = np.zeros((n, NUM_FEET))
        self.slip_speed = np.zeros((n, NUM_FEET))
        self.air_time = np.zeros((n, NUM_FEET))
        self.contact_time = np.zeros((n, NUM_FEET))
        self.air_hist = np.zeros((n, NUM_FEET, AIR_HIST_LEN))
        self.contact_hist = np.zeros((n, NUM_FEET, AIR_HIST_LEN))
        self.air_hist_n = np.zeros((n, NUM_FEET))
        self.contact_hist_n = np.zeros((n, NUM_FEET))
        self.new_contact = np.zeros((n, NUM_FEET))
        self.air_at_contact = np.zeros((n, NUM_FEET))
        self.episode_t = np.zeros(n)
        self.ee_pos_ctrl = np.zeros((n, 3))
        self.ee_quat_ctrl = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1))
        self.gait_quality = np.ones(n)
        self.terminated = np.zeros(n)
        self.truncated = np.zeros(n)
        self.n_robot = np.zeros(n)
        self.n_arm = np.zeros(n)
        self.prev_action = np.zeros((n, a))
        self.joint_history = np.zeros((n, HISTORY_STEPS, a))

        # per-episode disturbances
        self.friction = np.ones((n, NUM_FEET))
        self.friction_dyn = np.ones((n, NUM_FEET))
        self.torso_mass = np.zeros(n)
        self.ee_mass = np.zeros(n)
        self.base_wrench = np.zeros((n, 6))
        self.ee_wrench = np.zeros((n, 6))
        self.push_start = np.full((n, MAX_PUSH_WINDOWS), np.inf)
        self.push_end = np.full((n, MAX_PUSH_WINDOWS), np.inf)
        self.push_vel = np.zeros((n, MAX_PUSH_WINDOWS, 6))

        self.reset_envs(np.arange(n))

    def _joint_limits(self):
        lo = np.empty(self.cfg.num_joints)
        hi = np.empty(self.cfg.num_joints)
        lo[: self.cfg.n_leg_dof] = 0.0
        hi[: self.cfg.n_leg_dof] = self.cfg.action.leg_range
        lo[self.cfg.n_leg_dof:] = -self.cfg.action.arm_limit
        hi[self.cfg.n_leg_dof:] = self.cfg.action.arm_limit
        return lo, hi

    def _randomize_batch(self, idx: np.ndarray) -> None:
        """Vectorized equivalent of randomize_episode for many robots."""
        d = self.cfg.disturbances
        rng = self.rng
        m = idx.size

        def u(rg, *shape):
            return rng.uniform(rg[0], rg[1], size=shape if shape else None)

        self.friction[idx] = u(d.friction_static, m, NUM_FEET)
        self.friction_dyn[idx] = u(d.friction_dynamic, m, NUM_FEET)
        self.torso_mass[idx] = u(d.torso_mass, m)
        self.ee_mass[idx] = u(d.ee_mass, m)
        self.base_wrench[idx, :3] = u(d.torso_force, m, 3)
        self.base_wrench[idx, 3:] = u(d.torso_torque, m, 3)
        self.ee_wrench[idx, :3] = u(d.ee_force, m, 3)
        self.ee_wrench[idx, 3:] = u(d.ee_torque, m, 3)
        gaps = u(d.push_interval, m, MAX_PUSH_WINDOWS)
        durs = u(d.push_duration, m, MAX_PUSH_WINDOWS)
        starts = np.cumsum(gaps, axis=1)
        starts[:, 1:] += np.cumsum(durs[:, :-1], axis=1)
        ends = starts + durs
        past = starts >= self.cfg.episode_s
        starts[past] = np.inf
        ends[past] = np.inf
        self.push_start[idx] = starts
        self.push_end[idx] = ends
        vel = np.empty((m, MAX_PUSH_WINDOWS, 6))
        vel[:, :, :3] = u(d.push_lin_vel, m, MAX_PUSH_WINDOWS, 3)
        vel[:, :, 3:] = u(d.push_ang_vel, m, MAX_PUSH_WINDOWS, 3)
        vel[past] = 0.0
        self.push_vel[idx] = vel

    def reset_envs(self, idx: np.ndarray) -> None:
        """Fresh episode state plus new disturbances for the given robots."""
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            return
        p = self.cfg.physics
        self._randomize_batch(idx)
        self.joints[idx] = 0.0
        self.joints[idx, self.n_leg_dof:] = self.rng.uniform(
            -0.4, 0.4, (idx.size, ARM_JOINTS))
        self.base_pos[idx] = 0.0
        self.base_pos[idx, 2] = p.z_nominal
        self.base_rpy[idx] = 0.0
        self.base_vel_xy[idx] = 0.0
        self.base_vz[idx] = 0.0
        self.base_rpy_rate[idx] = 0.0
        self.joint_vel[idx] = 0.0
        self.joint_torque[idx] = 0.0
        self.joint_targets[idx] = self.joints[idx]
        self.leg_heights[idx] = self.joints[idx][:, : self.n_leg_dof: self.cfg.joints_per_leg]
        self.contacts[idx] = 1.0
        self.forces[idx] = 0.25 * (p.base_mass + self.torso_mass[idx, None] + self.ee_mass[idx, None]) * 9.81
        self.slip_speed[idx] = 0.0
        self.air_time[idx] = 0.0
        self.contact_time[idx] = 0.0
        self.air_hist[idx] = 0.0
        self.contact_hist[idx] = 0.0
        self.air_hist_n[idx] = 0.0
        self.contact_hist_n[idx] = 0.0
        self.new_contact[idx] = 0.0
        self.air_at_contact[idx] = 0.0
        self.episode_t[idx] = 0.0
        self.terminated[idx] = 0.0
        self.truncated[idx] = 0.0
        self.n_robot[idx] = 0.0
        self.n_arm[idx] = 0.0
        self.prev_action[idx] = 0.0
        self.gait_quality[idx] = 1.0
        self._refresh_ee_pose(idx)
        self.joint_history[idx] = self.joints[idx][:, None, :]

    def _refresh_ee_pose(self, idx) -> None:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        mount = np.asarray(self.cfg.physics.mount_offset)
        ee_pose_kernel(idx, self.base_pos, self.base_rpy, self.joints,
                       self.n_leg_dof, mount, self.arm.axes, self.arm.offsets,
                       self.cfg.physics.z_nominal,
                       self.ee_pos_ctrl, self.ee_quat_ctrl)

    def pose_legs(self, idx: np.ndarray, heights: np.ndarray) -> None:
        """Place leg height joints (and their targets/contacts) directly;
        used to start episodes mid-gait."""
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        heights = np.clip(np.asarray(heights, dtype=np.float64),
                          0.0, self.cfg.action.leg_range)
        jpl = self.cfg.joints_per_leg
        for f in range(NUM_FEET):
            self.joints[idx, f * jpl] = heights[:, f]
        self.joint_targets[idx] = self.joints[idx]
        self.leg_heights[idx] = heights
        in_contact = heights <= self.cfg.physics.contact_eps
        self.contacts[idx] = in_contact.astype(np.float64)
        n_c = np.maximum(in_contact.sum(axis=1), 1)
        p = self.cfg.physics
        weight = (p.base_mass + self.torso_mass[idx] + self.ee_mass[idx]) * 9.81
        self.forces[idx] = in_contact * (weight / n_c)[:, None]

    def apply_actions(self, actions: np.ndarray) -> tuple:
        """Residual action rule, batched; returns (targets, nan_mask)."""
        nan_mask = np.isnan(actions).any(axis=1).astype(np.float64)
        safe = np.nan_to_num(actions, nan=0.0)
        offset = np.clip(safe / self.sigma_a, -1.0, 1.0)
        targets = np.clip(self.joints + offset, self.q_lo, self.q_hi)
        return targets, nan_mask

    def step(self, targets: np.ndarray, base_cmd: np.ndarray, foot_cmd: np.ndarray,
             nan_mask: np.ndarray) -> None:
        """One dynamics step for every robot; flags are left for the caller."""
        self.joint_targets[:] = targets
        step_kernel(
            self.base_pos, self.base_rpy, self.base_vel_xy, self.base_vz,
            self.base_rpy_rate, self.joints, self.joint_vel, self.joint_torque,
            self.leg_heights, self.contacts, self.forces, self.slip_speed,
            self.air_time, self.contact_time, self.air_hist, self.contact_hist,
            self.air_hist_n, self.contact_hist_n, self.new_contact,
            self.air_at_contact, self.episode_t, self.ee_pos_ctrl,
            self.ee_quat_ctrl, self.gait_quality, self.terminated, self.truncated,
            self.n_robot, self.n_arm,
            targets, base_cmd, foot_cmd, nan_mask,
            self.friction, self.base_wrench, self.ee_wrench,
            self.torso_mass, self.ee_mass,
            self.q_lo, self.q_hi, self.arm.axes, self.arm.offsets,
            self.cfg.joints_per_leg, self.phys,
        )

    def push_velocity_now(self) -> np.ndarray:
        """Currently active measured-velocity offset per robot, (N, 6)."""
        active = (self.episode_t[:, None] >= self.push_start) & (self.episode_t[:, None] < self.push_end)
        return (self.push_vel * active[:, :, None]).sum(axis=1)

    def record_history(self) -> None:
        self.joint_history[:, :-1] = self.joint_history[:, 1:]
        self.joint_history[:, -1] = self.joints

    def shoulder_position_ctrl(self) -> np.ndarray:
        """Shoulder (arm base) position in the control frame at rest attitude."""
        p = self.cfg.physics
        mount = np.asarray(p.mount_offset)
        riser = self.arm.offsets[0] + self.arm.offsets[1]
        return mount + riser + np.array([0.0, 0.0, 0.0])

    def state_at(self, i: int) -> RobotState:
        return RobotState(
            base_pos=self.base_pos[i].copy(),
            base_rpy=self.base_rpy[i].copy(),
            base_vel_xy=self.base_vel_xy[i].copy(),
            base_vz=float(self.base_vz[i]),
            base_rpy_rate=self.base_rpy_rate[i].copy(),
            joints=self.joints[i].copy(),
            joint_vel=self.joint_vel[i].copy(),
            joint_targets=self.joint_targets[i].copy(),
            joint_torque=self.joint_torque[i].copy(),
            leg_heights=self.leg_heights[i].copy(),
            contacts=self.contacts[i] > 0.5,
            forces=self.forces[i].copy(),
            slip_speed=self.slip_speed[i].copy(),
            air_time=self.air_time[i].copy(),
            contact_time=self.contact_time[i].copy(),
            air_hist=self.air_hist[i].copy(),
            contact_hist=self.contact_hist[i].copy(),
            air_hist_n=self.air_hist_n[i].copy(),
            contact_hist_n=self.contact_hist_n[i].copy(),
            new_contact=self.new_contact[i] > 0.5,
            air_at_contact=self.air_at_contact[i].copy(),
            ee_pos_ctrl=self.ee_pos_ctrl[i].copy(),
            ee_quat_ctrl=self.ee_quat_ctrl[i].copy(),
            episode_t=float(self.episode_t[i]),
            terminated=bool(self.terminated[i] > 0.5),
            n_undesired_robot=float(self.n_robot[i]),
            n_undesired_arm=float(self.n_arm[i]),
            n_leg_dof=self.n_leg_dof,
        )


def ee_forward_kinematics(q_arm: np.ndarray, arm: ArmModel | None = None) -> Pose:
    """End-effector pose in the arm mount frame for a joint configuration."""
    model = arm if arm is not None else ArmModel()
    return model.forward(q_arm)


def obs_dim(cfg: EnvConfig) -> int:
    a = cfg.num_joints
    return HISTORY_STEPS * a + 9 + 2 * a + PRIVILEGED_DIM + a + COMMAND_DIM


def obs_slices(cfg: EnvConfig) -> dict:
    """Named slices into the flat observation vector."""
    a = cfg.num_joints
    out = {}
    start = 0
    for name, width in (
        ("history", HISTORY_STEPS * a),
        ("gravity", 3),
        ("lin_vel", 3),
        ("ang_vel", 3),
        ("joint_pos", a),
        ("joint_vel", a),
        ("privileged", PRIVILEGED_DIM),
        ("prev_action", a),
        ("command", COMMAND_DIM),
    ):
        out[name] = slice(start, start + width)
        start += width
    return out


def noise_template(cfg: EnvConfig) -> np.ndarray:
    """Uniform-noise half-widths per observation entry (student inputs)."""
    scale = np.zeros(obs_dim(cfg))
    s = obs_slices(cfg)
    scale[s["history"]] = 0.01
    scale[s["gravity"]] = 0.01
    scale[s["lin_vel"]] = 0.01
    scale[s["ang_vel"]] = 0.1
    scale[s["joint_pos"]] = 0.01
    scale[s["joint_vel"]] = 0.2
    return scale


def privileged_mask(cfg: EnvConfig) -> np.ndarray:
    """True on entries the student policy must not see."""
    mask = np.zeros(obs_dim(cfg), dtype=bool)
    mask[obs_slices(cfg)["privileged"]] = True
    return mask


def _body_frame_vectors(rpy: np.ndarray, vel_xy: np.ndarray, vz: np.ndarray):
    """Projected gravity and base-frame linear velocity, batched."""
    sr, cr = np.sin(rpy[:, 0]), np.cos(rpy[:, 0])
    sp, cp = np.sin(rpy[:, 1]), np.cos(rpy[:, 1])
    grav = np.stack([sp, -sr * cp, -cr * cp], axis=1)
    vx, vy = vel_xy[:, 0], vel_xy[:, 1]
    # yaw is already removed from vel_xy; apply the remaining pitch/roll
    ax = cp * vx - sp * vz
    ay = vy
    az = sp * vx + cp * vz
    v_base = np.stack([ax, cr * ay + sr * az, -sr * ay + cr * az], axis=1)
    return grav, v_base


@dataclass
class Observation:
    """Structured policy input; flattens to [h_t, o_t, p_t, a_prev, c_t]."""

    history: np.ndarray
    proprio: np.ndarray
    privileged: np.ndarray
    prev_action: np.ndarray
    command: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([
            self.history.ravel(), self.proprio, self.privileged,
            self.prev_action, self.command,
        ])


def assemble_observations(env: ToyVecEnv, command_flat: np.ndarray) -> np.ndarray:
    """Teacher observations (N, D): full state including privileged block.

    The measured base velocities include any active push offsets; the
    privileged block carries the same offsets so the teacher can explain
    them away.
    """
    push = env.push_velocity_now()
    grav, v_base = _body_frame_vectors(env.base_rpy, env.base_vel_xy, env.base_vz)
    v_meas = v_base + push[:, :3]
    w_meas = env.base_rpy_rate + push[:, 3:]
    priv = np.concatenate([
        env.contacts, env.friction, env.air_time, env.base_wrench, push,
        env.torso_mass[:, None], env.ee_wrench, env.ee_mass[:, None],
    ], axis=1)
    return np.concatenate([
        env.joint_history.reshape(env.n, -1),
        grav, v_meas, w_meas, env.joints, env.joint_vel,
        priv, env.prev_action, command_flat,
    ], axis=1)


def observe(state: RobotState, command, prev_action: np.ndarray,
            history: np.ndarray, privileged: bool = True,
            noise_rng: np.random.Generator | None = None,
            push_velocity: np.ndarray | None = None,
            friction: np.ndarray | None = None,
            base_wrench: np.ndarray | None = None,
            ee_wrench: np.ndarray | None = None,
            torso_mass: float = 0.0, ee_mass: float = 0.0) -> Observation:
    """Single-robot observation.  ``history`` must hold the last
    HISTORY_STEPS joint position rows.  With ``privileged=False`` the
    privileged block is zeroed; passing ``noise_rng`` adds the student's
    uniform observation noise."""
    history = np.asarray(history, dtype=np.float64)
    if history.shape[0] != HISTORY_STEPS:
        raise ValueError(f"history must hold {HISTORY_STEPS} steps")
    push = np.zeros(6) if push_velocity is None else np.asarray(push_velocity)
    rpy = state.base_rpy[None, :]
    grav, v_base = _body_frame_vectors(rpy, state.base_vel_xy[None, :],
                                       np.array([state.base_vz]))
    proprio = np.concatenate([
        grav[0], v_base[0] + push[:3], state.base_rpy_rate + push[3:],
        state.joints, state.joint_vel,
    ])
    priv = np.concatenate([
        state.contacts.astype(np.float64),
        np.ones(4) if friction is None else np.asarray(friction, dtype=np.float64),
        state.air_time,
        np.zeros(6) if base_wrench is None else np.asarray(base_wrench, dtype=np.float64),
        push,
        [torso_mass],
        np.zeros(6) if ee_wrench is None else np.asarray(ee_wrench, dtype=np.float64),
        [ee_mass],
    ])
    if isinstance(command, np.ndarray):
        cmd_flat = np.asarray(command, dtype=np.float64)
    else:
        cmd_flat = command.flat()
    obs = Observation(history.copy(), proprio, priv,
                      np.asarray(prev_action, dtype=np.float64).copy(), cmd_flat)
    if not privileged:
        obs.privileged = np.zeros_like(obs.privileged)
    if noise_rng is not None:
        n_joints = state.joints.shape[0]
        obs.history = obs.history + noise_rng.uniform(-0.01, 0.01, obs.history.shape)
        noise = np.concatenate([
            noise_rng.uniform(-0.01, 0.01, 3),
            noise_rng.uniform(-0.01, 0.01, 3),
            noise_rng.uniform(-0.1, 0.1, 3),
            noise_rng.uniform(-0.01, 0.01, n_joints),
            noise_rng.uniform(-0.2, 0.2, n_joints),
        ])
        obs.proprio = obs.proprio + noise
    return obs
