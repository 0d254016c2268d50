"""Forward kinematics of the 6-DoF serial arm.

The chain is a conventional yaw-pitch-pitch arm with a 3-axis wrist,
mounted on the front of the torso.  Joint axes (in each joint's parent
frame) and the fixed translation preceding each joint:

    joint 1: z axis, offset [0, 0, 0.08]        (shoulder yaw riser)
    joint 2: y axis, offset [0.05, 0, 0.04]     (shoulder pitch)
    joint 3: y axis, offset [0.28, 0, 0]        (elbow, after upper arm)
    joint 4: x axis, offset [0.25, 0, 0]        (forearm roll)
    joint 5: y axis, offset [0.05, 0, 0]        (wrist pitch)
    joint 6: x axis, offset [0.04, 0, 0]        (wrist roll)
    tool:              offset [0.08, 0, 0]

At the zero configuration the arm points along +x; the home end-effector
pose is [0.75, 0, 0.12] with identity orientation (relative to the mount).
Link offsets are configurable; the values above are the defaults used by
every profile.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .accel import jit_kernel
from .lie import Pose, quat_identity, quat_mul, quat_rotate

NUM_ARM_JOINTS = 6

# axis codes per joint: 0 = x, 1 = y, 2 = z
DEFAULT_AXES = np.array([2, 1, 1, 0, 1, 0], dtype=np.int64)

DEFAULT_OFFSETS = np.array(
    [
        [0.0, 0.0, 0.08],
        [0.05, 0.0, 0.04],
        [0.28, 0.0, 0.0],
        [0.25, 0.0, 0.0],
        [0.05, 0.0, 0.0],
        [0.04, 0.0, 0.0],
        [0.08, 0.0, 0.0],  # tool offset after the last joint
    ]
)


@jit_kernel
def _axis_quat(axis_code: int, angle: float) -> np.ndarray:
    half = 0.5 * angle
    q = np.zeros(4)
    q[0] = np.cos(half)
    q[1 + axis_code] = np.sin(half)
    return q


@jit_kernel
def fk_kernel(q_arm: np.ndarray, axes: np.ndarray, offsets: np.ndarray):
    """End-effector position and orientation in the mount frame."""
    p = np.zeros(3)
    rot = quat_identity()
    for j in range(axes.shape[0]):
        p = p + quat_rotate(rot, offsets[j])
        rot = quat_mul(rot, _axis_quat(axes[j], q_arm[j]))
    p = p + quat_rotate(rot, offsets[axes.shape[0]])
    return p, rot


@jit_kernel
def jacobian_kernel(q_arm: np.ndarray, axes: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Geometric Jacobian (linear 0:3, angular 3:6 rows) in the mount frame."""
    n = axes.shape[0]
    joint_pos = np.zeros((n, 3))
    joint_axis = np.zeros((n, 3))
    p = np.zeros(3)
    rot = quat_identity()
    for j in range(n):
        p = p + quat_rotate(rot, offsets[j])
        joint_pos[j] = p
        unit = np.zeros(3)
        unit[axes[j]] = 1.0
        joint_axis[j] = quat_rotate(rot, unit)
        rot = quat_mul(rot, _axis_quat(axes[j], q_arm[j]))
    ee = p + quat_rotate(rot, offsets[n])
    jac = np.zeros((6, n))
    for j in range(n):
        ax = joint_axis[j]
        r = ee - joint_pos[j]
        jac[0, j] = ax[1] * r[2] - ax[2] * r[1]
        jac[1, j] = ax[2] * r[0] - ax[0] * r[2]
        jac[2, j] = ax[0] * r[1] - ax[1] * r[0]
        jac[3, j] = ax[0]
        jac[4, j] = ax[1]
        jac[5, j] = ax[2]
    return jac


@dataclass
class ArmModel:
    """Fixed geometry of the serial arm."""

    axes: np.ndarray = field(default_factory=lambda: DEFAULT_AXES.copy())
    offsets: np.ndarray = field(default_factory=lambda: DEFAULT_OFFSETS.copy())

    def __post_init__(self):
        self.axes = np.asarray(self.axes, dtype=np.int64)
        self.offsets = np.asarray(self.offsets, dtype=np.float64)
        if self.offsets.shape != (self.axes.shape[0] + 1, 3):
            raise ValueError("offsets must have one row per joint plus the tool row")

    @property
    def num_joints(self) -> int:
        return int(self.axes.shape[0])

    def forward(self, q_arm: np.ndarray) -> Pose:
        q_arm = np.asarray(q_arm, dtype=np.float64).reshape(self.num_joints)
        p, rot = fk_kernel(q_arm, self.axes, self.offsets)
        return Pose(p, rot)

    def jacobian(self, q_arm: np.ndarray) -> np.ndarray:
        q_arm = np.asarray(q_arm, dtype=np.float64).reshape(self.num_joints)
        return jacobian_kernel(q_arm, self.axes, self.offsets)

    def reach(self) -> float:
        """Upper bound on the tool distance from the top of the riser (the
        first point fixed under every joint)."""
        return float(np.sum(np.linalg.norm(self.offsets[1:], axis=1)))
