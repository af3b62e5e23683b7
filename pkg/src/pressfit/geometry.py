"""Rigid-body pose algebra for end-effector trajectories.

Poses carry a translation in meters plus a unit quaternion in (w, x, y, z)
order.  Incremental actions are 3 translation deltas (meters) and 3 rotation
deltas expressed as intrinsic XYZ Euler angles (radians).  Euler order is
fixed package-wide; serialized files record it in their manifests.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

QUAT_NORM_TOL = 1e-6  # constructor rejection threshold, see Pose6D

# ---------------------------------------------------------------------------
# Quaternion helpers (w, x, y, z)
# ---------------------------------------------------------------------------


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Return q scaled to unit norm with the canonical sign (w >= 0)."""
    q = np.asarray(q, dtype=np.float64)
    n = float(np.linalg.norm(q))
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("quaternion has zero or non-finite norm")
    q = q / n
    # Canonical sign: w >= 0; for w == 0 fall back to the first nonzero
    # component so the representative is still unique.
    if q[0] < 0.0:
        q = -q
    elif q[0] == 0.0:
        for c in q[1:]:
            if c != 0.0:
                if c < 0.0:
                    q = -q
                break
    return q


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        dtype=np.float64,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=np.float64)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by quaternion q."""
    qv = np.array([0.0, v[0], v[1], v[2]])
    out = quat_multiply(quat_multiply(q, qv), quat_conjugate(q))
    return out[1:]


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = float(np.linalg.norm(axis))
    if n == 0.0:
        raise ValueError("rotation axis must be nonzero")
    half = 0.5 * float(angle)
    q = np.concatenate(([np.cos(half)], np.sin(half) * axis / n))
    return quat_normalize(q)


def quat_from_euler_xyz(euler: np.ndarray) -> np.ndarray:
    """Quaternion for intrinsic XYZ rotation R = Rx(a) @ Ry(b) @ Rz(c)."""
    a, b, c = (float(x) for x in euler)
    qx = np.array([np.cos(a / 2), np.sin(a / 2), 0.0, 0.0])
    qy = np.array([np.cos(b / 2), 0.0, np.sin(b / 2), 0.0])
    qz = np.array([np.cos(c / 2), 0.0, 0.0, np.sin(c / 2)])
    return quat_normalize(quat_multiply(quat_multiply(qx, qy), qz))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix to quaternion via the largest-pivot (Shepperd) branch."""
    m = np.asarray(m, dtype=np.float64)
    t = np.trace(m)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return quat_normalize(q)


def euler_xyz_from_quat(q: np.ndarray) -> np.ndarray:
    """Intrinsic XYZ Euler angles of q; gimbal-locked poses pick c = 0."""
    m = quat_to_matrix(q)
    sb = float(np.clip(m[0, 2], -1.0, 1.0))
    b = np.arcsin(sb)
    # The fallback drops information of order cos(b), while the regular
    # branch loses eps/cos(b); switching only when |sb| rounds to 1 keeps
    # both errors near 1e-8.
    if abs(sb) < 1.0:
        a = np.arctan2(-m[1, 2], m[2, 2])
        c = np.arctan2(-m[0, 1], m[0, 0])
    else:
        # cos(b) == 0: only the combined angle is observable, take c = 0
        c = 0.0
        a = np.arctan2(m[1, 0], m[1, 1])
        if sb < 0.0:
            a = -a
    return np.array([a, b, c], dtype=np.float64)


def rotation_angle_between(qa: np.ndarray, qb: np.ndarray) -> float:
    """Geodesic angle in radians between two unit quaternions.

    Uses atan2 on the relative quaternion: stable down to ~1e-16 rad where
    the arccos-of-dot form bottoms out near 3e-8.
    """
    rel = quat_multiply(quat_conjugate(np.asarray(qa, float)), np.asarray(qb, float))
    return 2.0 * float(np.arctan2(np.linalg.norm(rel[1:]), abs(rel[0])))


# ---------------------------------------------------------------------------
# Pose and action types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pose6D:
    """Translation (m) plus unit quaternion (w, x, y, z), canonical w >= 0."""

    translation: np.ndarray
    quaternion: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        q = np.asarray(self.quaternion, dtype=np.float64).reshape(4)
        if not np.all(np.isfinite(t)):
            raise ValueError("pose translation must be finite")
        if not np.all(np.isfinite(q)):
            raise ValueError("pose quaternion must be finite")
        n = float(np.linalg.norm(q))
        if abs(n - 1.0) > QUAT_NORM_TOL:
            raise ValueError(f"quaternion norm {n:.9f} deviates beyond {QUAT_NORM_TOL}")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "quaternion", quat_normalize(q))

    @staticmethod
    def identity() -> "Pose6D":
        return Pose6D(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 transform."""
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.quaternion)
        m[:3, 3] = self.translation
        return m

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose6D":
        return Pose6D(np.asarray(m)[:3, 3], matrix_to_quat(np.asarray(m)[:3, :3]))

    def features(self) -> np.ndarray:
        """6-vector (translation, intrinsic XYZ Euler) used as policy input."""
        return np.concatenate([self.translation, euler_xyz_from_quat(self.quaternion)])


@dataclass(frozen=True)
class DeltaAction:
    """Incremental end-effector motion: meters and intrinsic XYZ Euler radians."""

    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(r))):
            raise ValueError("action components must be finite")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", r)

    @staticmethod
    def zero() -> "DeltaAction":
        return DeltaAction(np.zeros(3), np.zeros(3))

    @staticmethod
    def from_vector(v: np.ndarray) -> "DeltaAction":
        v = np.asarray(v, dtype=np.float64).reshape(6)
        return DeltaAction(v[:3], v[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.translation, self.rotation])


def compose(pose: Pose6D, delta: DeltaAction) -> Pose6D:
    """Apply a delta: translation added in the world frame, rotation as a
    body-frame increment built from the delta's Euler angles."""
    q_d = quat_from_euler_xyz(delta.rotation)
    return Pose6D(
        pose.translation + delta.translation,
        quat_multiply(pose.quaternion, q_d),
    )


def delta_between(pose_a: Pose6D, pose_b: Pose6D) -> DeltaAction:
    """Delta d with compose(pose_a, d) == pose_b (up to quaternion sign)."""
    q_rel = quat_normalize(quat_multiply(quat_conjugate(pose_a.quaternion), pose_b.quaternion))
    return DeltaAction(
        pose_b.translation - pose_a.translation,
        euler_xyz_from_quat(q_rel),
    )


# ---------------------------------------------------------------------------
# Action normalization and the trajectory error metric
# ---------------------------------------------------------------------------


@dataclass
class NormalizationScales:
    """Per-component min/max of a training action set.

    Components where max == min normalize to the constant 0.5; those
    components are flagged in `degenerate` and logged once at fit time.
    """

    lo: np.ndarray
    hi: np.ndarray
    degenerate: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.lo = np.asarray(self.lo, dtype=np.float64).reshape(6)
        self.hi = np.asarray(self.hi, dtype=np.float64).reshape(6)
        if np.any(self.hi < self.lo):
            raise ValueError("normalization max must be >= min per component")
        if self.degenerate is None:
            self.degenerate = self.hi == self.lo

    @staticmethod
    def fit(actions: np.ndarray) -> "NormalizationScales":
        """Compute scales from a (n, 6) training action matrix."""
        a = np.asarray(actions, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != 6 or a.shape[0] == 0:
            raise ValueError("expected a nonempty (n, 6) action matrix")
        lo, hi = a.min(axis=0), a.max(axis=0)
        degenerate = hi == lo
        if np.any(degenerate):
            log.warning(
                "normalization: %d degenerate action component(s) %s map to 0.5",
                int(degenerate.sum()),
                np.flatnonzero(degenerate).tolist(),
            )
        return NormalizationScales(lo, hi, degenerate)


def minmax_normalize(actions: np.ndarray, scales: NormalizationScales) -> np.ndarray:
    """Map actions into [0, 1] per component using training-set min/max."""
    a = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    span = np.where(scales.degenerate, 1.0, scales.hi - scales.lo)
    out = (a - scales.lo) / span
    out[:, scales.degenerate] = 0.5
    return out if np.asarray(actions).ndim == 2 else out[0]


def minmax_denormalize(normed: np.ndarray, scales: NormalizationScales) -> np.ndarray:
    """Inverse of minmax_normalize; degenerate components recover their value."""
    a = np.atleast_2d(np.asarray(normed, dtype=np.float64))
    span = np.where(scales.degenerate, 0.0, scales.hi - scales.lo)
    out = scales.lo + a * span
    out[:, scales.degenerate] = scales.lo[scales.degenerate]
    return out if np.asarray(normed).ndim == 2 else out[0]


def action_mse(predicted: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over every scalar entry of two (n, 6) matrices.

    A single wrong component in an n-step trajectory contributes
    err^2 / (6 n): the mean runs over all 6 n entries, not over rows.
    """
    p = np.atleast_2d(np.asarray(predicted, dtype=np.float64))
    t = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    return float(np.mean((p - t) ** 2))
