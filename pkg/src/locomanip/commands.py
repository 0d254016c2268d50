"""Policy command generation.

Produces everything the policy is commanded with: end-effector goal poses
and interpolated trajectory waypoints, the twist command toward the next
waypoint, sinusoidal swing-height targets for the four feet, and the base
velocity command.  The task lives in the control frame (gravity-aligned,
yaw-following, at nominal torso height); during the frame curriculum the
end-effector quantities handed to the policy are re-expressed in the full
base frame instead.

All sampling goes through explicit numpy Generators so that a seed fully
determines every command sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .accel import jit_kernel
from .lie import (
    Pose,
    boxminus,
    boxplus,
    lerp,
    matrix_to_quat,
    quat_conjugate,
    quat_from_rpy,
    quat_identity,
    quat_mul,
    quat_rotate,
    slerp,
)

FOOT_NAMES = ("LF", "RF", "LH", "RH")

# Walking phase offsets (LF, RF, LH, RH); trot is [0, 0.5, 0.5, 0].
DEFAULT_FOOT_OFFSETS = (0.0, 0.5, 0.25, 0.75)

GRAVITY_DIR = np.array([0.0, 0.0, -1.0])

COMMAND_DIM = 20  # 3 base + 6 twist + 7 goal pose + 4 foot heights


class GoalSamplingError(RuntimeError):
    """Rejection sampling failed; the exclusion cuboid nearly fills the sphere."""


@dataclass
class Twist:
    """6D velocity: linear (m/s) and angular (rad/s) parts."""

    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=np.float64).reshape(3)
        self.angular = np.asarray(self.angular, dtype=np.float64).reshape(3)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


@dataclass
class TrajectorySpec:
    """One start-to-goal segment tracked over a fixed duration."""

    start: Pose
    goal: Pose
    duration: float
    mode: str = "global"  # "global" holds the start; "local" re-anchors each step

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValueError("trajectory duration must be positive")
        if self.mode not in ("global", "local"):
            raise ValueError(f"unknown trajectory mode {self.mode!r}")


@dataclass(frozen=True)
class GaitState:
    """Cyclic gait phase plus fixed per-foot offsets."""

    phase: float = 0.0
    offsets: tuple = DEFAULT_FOOT_OFFSETS
    frequency: float = 1.5  # Hz
    h_max: float = 0.08  # m

    def __post_init__(self):
        if self.h_max <= 0.0:
            raise ValueError("h_max must be positive")
        object.__setattr__(self, "phase", self.phase % 1.0)


@dataclass
class CommandVector:
    """Full policy command; flattens to 20 numbers."""

    base_lin: np.ndarray = field(default_factory=lambda: np.zeros(2))
    base_ang_z: float = 0.0
    ee_twist: Twist = field(default_factory=Twist)
    goal_pose: Pose = field(default_factory=Pose)
    foot_heights: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        self.base_lin = np.asarray(self.base_lin, dtype=np.float64).reshape(2)
        self.foot_heights = np.asarray(self.foot_heights, dtype=np.float64).reshape(4)

    def flat(self) -> np.ndarray:
        return np.concatenate(
            [
                self.base_lin,
                [self.base_ang_z],
                self.ee_twist.flat(),
                self.goal_pose.flat(),
                self.foot_heights,
            ]
        )


@dataclass
class FrameCurriculum:
    """Command-frame schedule: base frame early, control frame afterwards."""

    switch_iteration: int = 0

    def frame_at(self, iteration: int) -> str:
        return "base" if iteration < self.switch_iteration else "control"


def sample_goal_pose(
    rng: np.random.Generator,
    shoulder_pos: np.ndarray,
    cuboid: tuple,
    radius: float = 1.0,
    tilt_bound: float = math.pi / 4,
    torso_center: np.ndarray | None = None,
    max_draws: int = 1000,
) -> Pose:
    """Sample a reachable-ish goal pose around the shoulder.

    Positions are uniform in the sphere of the given radius centered at the
    shoulder, rejecting any draw inside the torso cuboid (an axis-aligned
    (lo, hi) corner pair).  The orientation points the tool x-axis along
    gravity and the z-axis outward from the torso center, then perturbs
    about each axis by independent uniform angles within +-tilt_bound.
    """
    shoulder_pos = np.asarray(shoulder_pos, dtype=np.float64)
    lo = np.asarray(cuboid[0], dtype=np.float64)
    hi = np.asarray(cuboid[1], dtype=np.float64)
    if torso_center is None:
        torso_center = 0.5 * (lo + hi)
    for _ in range(max_draws):
        direction = rng.normal(size=3)
        norm = np.linalg.norm(direction)
        if norm < 1e-12:
            continue
        r = radius * rng.uniform() ** (1.0 / 3.0)
        pos = shoulder_pos + direction / norm * r
        if np.all(pos >= lo) and np.all(pos <= hi):
            continue
        quat = reference_orientation(pos, torso_center)
        if tilt_bound > 0.0:
            angles = rng.uniform(-tilt_bound, tilt_bound, size=3)
            for axis in range(3):
                rv = np.zeros(3)
                rv[axis] = angles[axis]
                quat = boxplus(quat, rv)
        return Pose(pos, quat)
    raise GoalSamplingError(
        f"no valid goal position in {max_draws} draws; cuboid nearly fills the sphere"
    )


@jit_kernel
def goal_orientation_kernel(positions, torso_center, tilts, out_quat):
    """Reference orientation (tool x along gravity, z outward) perturbed by
    per-axis tilt angles, for a batch of goal positions."""
    n = positions.shape[0]
    for i in range(n):
        ox = positions[i, 0] - torso_center[0]
        oy = positions[i, 1] - torso_center[1]
        # project out the gravity direction [0, 0, -1]: drop the z component
        norm = math.sqrt(ox * ox + oy * oy)
        if norm < 1e-9:
            ox, oy = 1.0, 0.0
        else:
            ox /= norm
            oy /= norm
        rot = np.empty((3, 3))
        # columns: x = gravity, z = outward, y = z cross x
        rot[0, 0] = 0.0
        rot[1, 0] = 0.0
        rot[2, 0] = -1.0
        rot[0, 2] = ox
        rot[1, 2] = oy
        rot[2, 2] = 0.0
        rot[0, 1] = oy * (-1.0)
        rot[1, 1] = ox
        rot[2, 1] = 0.0
        q = matrix_to_quat(rot)
        for axis in range(3):
            rv = np.zeros(3)
            rv[axis] = tilts[i, axis]
            q = boxplus(q, rv)
        out_quat[i] = q


def sample_goals_batch(rng: np.random.Generator, count: int, shoulder_pos: np.ndarray,
                       cuboid: tuple, radius: float, tilt_bound: float,
                       torso_center: np.ndarray, max_rounds: int = 1000):
    """Vectorized goal sampling: same distribution as sample_goal_pose."""
    lo = np.asarray(cuboid[0], dtype=np.float64)
    hi = np.asarray(cuboid[1], dtype=np.float64)
    positions = np.zeros((count, 3))
    pending = np.arange(count)
    for _ in range(max_rounds):
        if pending.size == 0:
            break
        direction = rng.normal(size=(pending.size, 3))
        norms = np.linalg.norm(direction, axis=1)
        r = radius * rng.uniform(size=pending.size) ** (1.0 / 3.0)
        ok_norm = norms > 1e-12
        pos = shoulder_pos + direction / np.maximum(norms, 1e-12)[:, None] * r[:, None]
        inside = np.all(pos >= lo, axis=1) & np.all(pos <= hi, axis=1)
        good = ok_norm & ~inside
        positions[pending[good]] = pos[good]
        pending = pending[~good]
    else:
        raise GoalSamplingError("goal sampling failed to converge")
    tilts = rng.uniform(-tilt_bound, tilt_bound, size=(count, 3)) if tilt_bound > 0.0 \
        else np.zeros((count, 3))
    quats = np.zeros((count, 4))
    goal_orientation_kernel(positions, np.asarray(torso_center, dtype=np.float64),
                            tilts, quats)
    return positions, quats


def reference_orientation(position: np.ndarray, torso_center: np.ndarray) -> np.ndarray:
    """Tool x-axis along gravity, z-axis outward toward the position."""
    x_axis = GRAVITY_DIR
    outward = np.asarray(position, dtype=np.float64) - np.asarray(torso_center, dtype=np.float64)
    outward = outward - np.dot(outward, x_axis) * x_axis
    norm = np.linalg.norm(outward)
    if norm < 1e-9:
        outward = np.array([1.0, 0.0, 0.0])  # directly above/below: point forward
    else:
        outward = outward / norm
    z_axis = outward
    y_axis = np.cross(z_axis, x_axis)
    rot = np.column_stack([x_axis, y_axis, z_axis])
    return matrix_to_quat(rot)


def interpolate(spec: TrajectorySpec, t: float) -> Pose:
    """Waypoint pose at time t: linear in position, geodesic in orientation.

    Clamps to the goal once t exceeds the duration.
    """
    if t < 0.0:
        raise ValueError("trajectory time must be non-negative")
    alpha = min(t / spec.duration, 1.0)
    pos = lerp(spec.start.position, spec.goal.position, alpha)
    delta = boxminus(spec.goal.orientation, spec.start.orientation)
    quat = boxplus(spec.start.orientation, alpha * delta)
    return Pose(pos, quat)


def twist_command(waypoint: Pose, current_ee: Pose, dt: float) -> Twist:
    """Finite-difference twist that carries the end-effector to the waypoint."""
    if dt <= 0.0:
        raise ValueError("control time step must be positive")
    lin = (waypoint.position - current_ee.position) / dt
    ang = boxminus(waypoint.orientation, current_ee.orientation) / dt
    return Twist(lin, ang)


@jit_kernel
def foot_heights_kernel(phase: float, offsets: np.ndarray, h_max: float) -> np.ndarray:
    out = np.empty(offsets.shape[0])
    for i in range(offsets.shape[0]):
        s = math.sin(2.0 * math.pi * (phase + offsets[i]))
        out[i] = h_max * s if s > 0.0 else 0.0
    return out


def foot_heights(gait: GaitState) -> np.ndarray:
    """Per-foot commanded swing height; clamped to zero during stance."""
    return foot_heights_kernel(gait.phase, np.asarray(gait.offsets, dtype=np.float64), gait.h_max)


def advance_gait(gait: GaitState, dt: float) -> GaitState:
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    return replace(gait, phase=(gait.phase + gait.frequency * dt) % 1.0)


def resample_base_command(rng: np.random.Generator, limit: float = 0.25) -> tuple:
    """New base command: planar velocity (m/s) and yaw rate (rad/s), iid uniform."""
    v = rng.uniform(-limit, limit, size=2)
    w = float(rng.uniform(-limit, limit))
    return v, w


def control_frame_from_base(robot_state, cmd: CommandVector, z_nominal: float) -> CommandVector:
    """Re-express the end-effector quantities of a base-frame command in the
    control frame (yaw-only orientation, origin at torso xy at nominal height)."""
    roll, pitch = robot_state.base_rpy[0], robot_state.base_rpy[1]
    q_rp = quat_from_rpy(roll, pitch, 0.0)
    dz = robot_state.base_pos[2] - z_nominal
    return _reexpress(cmd, q_rp, np.array([0.0, 0.0, dz]))


def base_frame_from_control(robot_state, cmd: CommandVector, z_nominal: float) -> CommandVector:
    """Inverse of control_frame_from_base."""
    roll, pitch = robot_state.base_rpy[0], robot_state.base_rpy[1]
    q_rp = quat_conjugate(quat_from_rpy(roll, pitch, 0.0))
    dz = robot_state.base_pos[2] - z_nominal
    offset = quat_rotate(q_rp, -np.array([0.0, 0.0, dz]))
    return _reexpress(cmd, q_rp, offset)


def _reexpress(cmd: CommandVector, q: np.ndarray, offset: np.ndarray) -> CommandVector:
    twist = Twist(quat_rotate(q, cmd.ee_twist.linear), quat_rotate(q, cmd.ee_twist.angular))
    goal = Pose(
        quat_rotate(q, cmd.goal_pose.position) + offset,
        quat_mul(q, cmd.goal_pose.orientation),
    )
    return CommandVector(
        base_lin=cmd.base_lin.copy(),
        base_ang_z=cmd.base_ang_z,
        ee_twist=twist,
        goal_pose=goal,
        foot_heights=cmd.foot_heights.copy(),
    )


def express_in_frame(
    cmd: CommandVector, robot_state, curriculum, iteration: int = 0, z_nominal: float = 0.35
) -> CommandVector:
    """Map a base-frame command into the frame the curriculum selects.

    The base velocity command and foot heights are frame-independent; only
    the end-effector twist and goal pose are re-expressed.
    """
    frame = curriculum.frame_at(iteration) if isinstance(curriculum, FrameCurriculum) else str(curriculum)
    if frame == "base":
        return _reexpress(cmd, quat_identity(), np.zeros(3))
    if frame == "control":
        return control_frame_from_base(robot_state, cmd, z_nominal)
    raise ValueError(f"unknown command frame {frame!r}")
