"""Reward shaping for residual fine-tuning.

Terms: tanh-saturated distance and orientation progress, a KL-based
match between executed and demonstrated action distributions, and flat
penalties for slip and blocked motion.  A successful insertion short-
circuits everything to 1; otherwise the weighted sum lives in [-0.7, 1].
"""

from __future__ import annotations

import numpy as np

from pressfit.geometry import quat_conjugate, quat_multiply, quat_normalize

TRANSLATION_LIMIT_M = 0.0015
ROTATION_LIMIT_RAD = float(np.deg2rad(3.0))

SLIP_PENALTY = 0.5
BLOCKED_PENALTY = 0.2
VARIANCE_FLOOR = 1e-8


def clamp_residual(residual: np.ndarray) -> np.ndarray:
    """Box-limit a 6-vector correction: +-1.5 mm translation, +-3 deg rotation."""
    residual = np.asarray(residual, dtype=np.float64)
    if residual.shape[-1] != 6:
        raise ValueError("residual rows must be 6 wide")
    out = residual.copy()
    out[..., :3] = np.clip(out[..., :3], -TRANSLATION_LIMIT_M, TRANSLATION_LIMIT_M)
    out[..., 3:] = np.clip(out[..., 3:], -ROTATION_LIMIT_RAD, ROTATION_LIMIT_RAD)
    return out


def distance_reward(offset: np.ndarray) -> float:
    """1 - tanh(10 * ||tip - goal||), offset in meters."""
    return float(1.0 - np.tanh(10.0 * np.linalg.norm(offset)))


def orientation_reward(quat: np.ndarray, goal_quat: np.ndarray) -> float:
    """1 - tanh(7.5 * ||v||) where v is the relative quaternion's vector part."""
    rel = quat_multiply(quat_conjugate(quat_normalize(goal_quat)), quat_normalize(quat))
    if rel[0] < 0.0:
        rel = -rel
    return float(1.0 - np.tanh(7.5 * np.linalg.norm(rel[1:])))


def slip_penalty(prev_tactile: np.ndarray, tactile: np.ndarray, scale: float) -> float:
    """0.5 when the scaled tactile embedding jumps by at least 0.5."""
    jump = scale * np.linalg.norm(np.asarray(tactile) - np.asarray(prev_tactile))
    return SLIP_PENALTY if jump >= 0.5 else 0.0


def blocked_penalty(blocked: bool) -> float:
    return BLOCKED_PENALTY if blocked else 0.0


def _diag_gaussian(deltas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    deltas = np.atleast_2d(np.asarray(deltas, dtype=np.float64))
    if deltas.shape[1] != 6:
        raise ValueError("action rows must be 6 wide")
    mean = deltas.mean(axis=0)
    var = np.maximum(deltas.var(axis=0), VARIANCE_FLOOR)
    return mean, var


def alignment_reward(executed: np.ndarray, reference: np.ndarray) -> float:
    """exp(-KL(P || Q)) between diagonal Gaussian fits of the two delta sets.

    P comes from the executed actions, Q from the demonstration pool, so
    drifting away from demonstrated motion statistics decays the reward.
    """
    mp, vp = _diag_gaussian(executed)
    mq, vq = _diag_gaussian(reference)
    kl = 0.5 * np.sum(vp / vq + (mq - mp) ** 2 / vq - 1.0 + np.log(vq / vp))
    return float(np.exp(-kl))


def step_reward(
    success: bool,
    alignment: float,
    distance: float,
    orientation: float,
    blocked: bool,
    slipped: bool,
) -> float:
    """Weighted shaping total; success overrides everything at 1.0."""
    if success:
        return 1.0
    total = 0.5 * alignment + 0.3 * distance + 0.2 * orientation
    total -= blocked_penalty(blocked)
    total -= SLIP_PENALTY if slipped else 0.0
    return float(total)
