"""Rotation math on unit quaternions and 3D poses.

Conventions used throughout the package:

- Quaternions are float64 arrays ``[w, x, y, z]`` (Hamilton product,
  ``q_AB`` rotates B-frame vectors into A).  Every constructing operation
  returns a normalized quaternion with canonical sign ``w >= 0``; for
  half-turn rotations (``w == 0``) the sign is fixed so the largest-magnitude
  vector component is positive, which makes the boxminus of antipodal
  rotations deterministic.
- Rotation vectors (axis * angle, radians) are float64 arrays of length 3.
  ``quat_log``/``boxminus`` return the principal logarithm, magnitude <= pi.
- ``boxplus(q, v) = q * exp(v)`` and ``boxminus(p, q) = log(q^-1 * p)`` so
  that ``boxplus(q, boxminus(p, q)) == p``.

Every function here is numba-compatible: the hot batch kernels call them
per element inside compiled loops, and the same code runs interpreted when
acceleration is disabled (see accel.py).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .accel import jit_kernel

# Below this rotation magnitude exp/log switch to 2nd-order Taylor forms,
# avoiding 0/0 without branching on exact zero.
SMALL_ANGLE = 1e-8


@jit_kernel
def quat_identity() -> np.ndarray:
    q = np.zeros(4)
    q[0] = 1.0
    return q


@jit_kernel
def quat_canonicalize(q: np.ndarray) -> np.ndarray:
    """Collapse the q / -q ambiguity: w >= 0, half-turn tie broken on the
    largest-magnitude vector component."""
    out = q.copy()
    w = out[0]
    if w > 1e-15 or w < -1e-15:
        if w < 0.0:
            out = -out
        return out
    # w == 0: half turn, pick the sign from the dominant axis component
    k = 1
    best = abs(out[1])
    if abs(out[2]) > best:
        k = 2
        best = abs(out[2])
    if abs(out[3]) > best:
        k = 3
    if out[k] < 0.0:
        out = -out
    out[0] = abs(out[0])
    return out


@jit_kernel
def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return quat_canonicalize(q / n)


@jit_kernel
def quat_conjugate(q: np.ndarray) -> np.ndarray:
    out = np.empty(4)
    out[0] = q[0]
    out[1] = -q[1]
    out[2] = -q[2]
    out[3] = -q[3]
    return out


@jit_kernel
def quat_mul_raw(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product without normalization or sign fixing."""
    out = np.empty(4)
    out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]
    return out


@jit_kernel
def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return quat_normalize(quat_mul_raw(a, b))


@jit_kernel
def quat_exp(v: np.ndarray) -> np.ndarray:
    """Axis-angle rotation vector to unit quaternion."""
    angle = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    out = np.empty(4)
    if angle < SMALL_ANGLE:
        # 2nd-order Taylor of cos/sinc at half angle
        out[0] = 1.0 - 0.125 * angle * angle
        s = 0.5 - angle * angle / 48.0
    else:
        half = 0.5 * angle
        out[0] = math.cos(half)
        s = math.sin(half) / angle
    out[1] = s * v[0]
    out[2] = s * v[1]
    out[3] = s * v[2]
    return quat_normalize(out)


@jit_kernel
def quat_log(q: np.ndarray) -> np.ndarray:
    """Principal logarithm of a unit quaternion, magnitude <= pi."""
    qc = quat_canonicalize(q)
    vn = math.sqrt(qc[1] * qc[1] + qc[2] * qc[2] + qc[3] * qc[3])
    out = np.empty(3)
    if vn < SMALL_ANGLE:
        # w ~ 1 here because the sign is canonical
        scale = 2.0 / qc[0]
        out[0] = scale * qc[1]
        out[1] = scale * qc[2]
        out[2] = scale * qc[3]
        return out
    angle = 2.0 * math.atan2(vn, qc[0])
    scale = angle / vn
    out[0] = scale * qc[1]
    out[1] = scale * qc[2]
    out[2] = scale * qc[3]
    return out


@jit_kernel
def boxplus(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Retract a rotation vector onto the rotation group: q * exp(v)."""
    return quat_mul(q, quat_exp(v))


@jit_kernel
def boxminus(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Local difference log(q^-1 * p); inverse of boxplus in its domain."""
    return quat_log(quat_mul_raw(quat_conjugate(q), p))


@jit_kernel
def rotation_angle(p: np.ndarray, q: np.ndarray) -> float:
    d = boxminus(p, q)
    return math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])


@jit_kernel
def slerp(qa: np.ndarray, qb: np.ndarray, alpha: float) -> np.ndarray:
    """Geodesic interpolation from qa to qb, shortest-arc convention."""
    if alpha < 0.0 or alpha > 1.0:
        raise ValueError("slerp interpolation factor must be in [0, 1]")
    if alpha == 0.0:
        return quat_canonicalize(qa)
    if alpha == 1.0:
        return quat_canonicalize(qb)
    dot = qa[0] * qb[0] + qa[1] * qb[1] + qa[2] * qb[2] + qa[3] * qb[3]
    qb_adj = qb.copy()
    if dot < 0.0:
        qb_adj = -qb_adj
        dot = -dot
    if dot > 1.0:
        dot = 1.0
    omega = math.acos(dot)
    if omega < SMALL_ANGLE:
        out = qa * (1.0 - alpha) + qb_adj * alpha
        return quat_normalize(out)
    so = math.sin(omega)
    ca = math.sin((1.0 - alpha) * omega) / so
    cb = math.sin(alpha * omega) / so
    return quat_normalize(qa * ca + qb_adj * cb)


@jit_kernel
def lerp(ra: np.ndarray, rb: np.ndarray, alpha: float) -> np.ndarray:
    return ra + alpha * (rb - ra)


@jit_kernel
def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by quaternion q (v expressed in the child frame)."""
    # v' = v + 2w (u x v) + 2 u x (u x v)
    ux = q[2] * v[2] - q[3] * v[1]
    uy = q[3] * v[0] - q[1] * v[2]
    uz = q[1] * v[1] - q[2] * v[0]
    out = np.empty(3)
    out[0] = v[0] + 2.0 * (q[0] * ux + q[2] * uz - q[3] * uy)
    out[1] = v[1] + 2.0 * (q[0] * uy + q[3] * ux - q[1] * uz)
    out[2] = v[2] + 2.0 * (q[0] * uz + q[1] * uy - q[2] * ux)
    return out


@jit_kernel
def quat_rotate_inverse(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return quat_rotate(quat_conjugate(q), v)


@jit_kernel
def quat_from_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Intrinsic Z-Y-X (yaw, then pitch, then roll) to quaternion."""
    cy = math.cos(0.5 * yaw)
    sy = math.sin(0.5 * yaw)
    cp = math.cos(0.5 * pitch)
    sp = math.sin(0.5 * pitch)
    cr = math.cos(0.5 * roll)
    sr = math.sin(0.5 * roll)
    out = np.empty(4)
    out[0] = cy * cp * cr + sy * sp * sr
    out[1] = cy * cp * sr - sy * sp * cr
    out[2] = cy * sp * cr + sy * cp * sr
    out[3] = sy * cp * cr - cy * sp * sr
    return quat_canonicalize(out)


@jit_kernel
def yaw_from_quat(q: np.ndarray) -> float:
    return math.atan2(
        2.0 * (q[0] * q[3] + q[1] * q[2]),
        1.0 - 2.0 * (q[2] * q[2] + q[3] * q[3]),
    )


@jit_kernel
def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[0], q[1], q[2], q[3]
    out = np.empty((3, 3))
    out[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[0, 1] = 2.0 * (x * y - w * z)
    out[0, 2] = 2.0 * (x * z + w * y)
    out[1, 0] = 2.0 * (x * y + w * z)
    out[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[1, 2] = 2.0 * (y * z - w * x)
    out[2, 0] = 2.0 * (x * z - w * y)
    out[2, 1] = 2.0 * (y * z + w * x)
    out[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return out


@jit_kernel
def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Shepperd's method, stable for all rotations."""
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    q = np.empty(4)
    if trace > 0.0:
        s = math.sqrt(trace + 1.0) * 2.0
        q[0] = 0.25 * s
        q[1] = (m[2, 1] - m[1, 2]) / s
        q[2] = (m[0, 2] - m[2, 0]) / s
        q[3] = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q[0] = (m[2, 1] - m[1, 2]) / s
        q[1] = 0.25 * s
        q[2] = (m[0, 1] + m[1, 0]) / s
        q[3] = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q[0] = (m[0, 2] - m[2, 0]) / s
        q[1] = (m[0, 1] + m[1, 0]) / s
        q[2] = 0.25 * s
        q[3] = (m[1, 2] + m[2, 1]) / s
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q[0] = (m[1, 0] - m[0, 1]) / s
        q[1] = (m[0, 2] + m[2, 0]) / s
        q[2] = (m[1, 2] + m[2, 1]) / s
        q[3] = 0.25 * s
    return quat_normalize(q)


def quat_mul_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product over leading batch dimensions, canonical sign."""
    w = a[..., 0] * b[..., 0] - a[..., 1] * b[..., 1] - a[..., 2] * b[..., 2] - a[..., 3] * b[..., 3]
    x = a[..., 0] * b[..., 1] + a[..., 1] * b[..., 0] + a[..., 2] * b[..., 3] - a[..., 3] * b[..., 2]
    y = a[..., 0] * b[..., 2] - a[..., 1] * b[..., 3] + a[..., 2] * b[..., 0] + a[..., 3] * b[..., 1]
    z = a[..., 0] * b[..., 3] + a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1] + a[..., 3] * b[..., 0]
    out = np.stack([w, x, y, z], axis=-1)
    out /= np.linalg.norm(out, axis=-1, keepdims=True)
    return np.where(out[..., :1] < 0.0, -out, out)


def quat_conjugate_batch(q: np.ndarray) -> np.ndarray:
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_rotate_batch(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate batched vectors by batched quaternions."""
    u = q[..., 1:]
    w = q[..., :1]
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_angle_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Relative rotation angle between batched unit quaternions.

    Uses the chord identity ||qa -+ qb|| = 2 sin(theta/4), which keeps full
    precision near zero where the arccos of the dot product loses half the
    significand.
    """
    d = np.minimum(np.linalg.norm(a - b, axis=-1), np.linalg.norm(a + b, axis=-1))
    return 4.0 * np.arcsin(np.clip(0.5 * d, 0.0, 1.0))


def _as_quat(values) -> np.ndarray:
    q = np.asarray(values, dtype=np.float64).reshape(4)
    n = float(np.linalg.norm(q))
    if not 0.5 < n < 2.0:
        raise ValueError(f"quaternion norm {n} too far from 1 to renormalize")
    return quat_normalize(q)


@dataclass
class Pose:
    """Position plus unit orientation quaternion."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=quat_identity)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.orientation = _as_quat(self.orientation)

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.orientation.copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation])

    @classmethod
    def from_flat(cls, v: np.ndarray) -> "Pose":
        v = np.asarray(v, dtype=np.float64).reshape(7)
        return cls(v[:3], v[3:])

    def transform_point(self, p: np.ndarray) -> np.ndarray:
        return self.position + quat_rotate(self.orientation, np.asarray(p, dtype=np.float64))

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self.transform_point(other.position),
            quat_mul(self.orientation, other.orientation),
        )

    def inverse(self) -> "Pose":
        qinv = quat_conjugate(self.orientation)
        return Pose(quat_rotate(qinv, -self.position), quat_canonicalize(qinv))
