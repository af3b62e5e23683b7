"""Recorded multimodal trajectories and their on-disk form.

A trajectory is n observation frames (tactile grid, trailing audio window,
end-effector pose, timestamp) with n-1 actions between them.  Poses and
actions serialize as float64 records of 7 and 6 values; the bulkier sensor
blocks go to float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pressfit.container import read_container, write_container
from pressfit.geometry import DeltaAction, Pose6D

TACTILE_SHAPE = (24, 32)  # rows, cols


@dataclass(frozen=True)
class MultimodalFrame:
    """One observation: tactile in [0, 255], audio in [0, 1], pose, time."""

    tactile: np.ndarray
    audio: np.ndarray
    pose: Pose6D
    timestamp: float


@dataclass
class Trajectory:
    """Frame/action arrays plus recording metadata."""

    poses: np.ndarray  # (n, 7) translation + quaternion wxyz
    actions: np.ndarray  # (n - 1, 6)
    tactile: np.ndarray  # (n, 24, 32)
    audio: np.ndarray  # (n, samples)
    timestamps: np.ndarray  # (n,)
    blocked: np.ndarray  # (n,) 0/1 per frame
    slipped: np.ndarray
    contact: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.poses)
        if self.actions.shape != (n - 1, 6):
            raise ValueError(f"expected {n - 1} actions for {n} frames")
        for name in ("tactile", "audio", "timestamps", "blocked", "slipped", "contact"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length mismatch")

    def __len__(self) -> int:
        return len(self.poses)

    def frame(self, i: int) -> MultimodalFrame:
        return MultimodalFrame(
            tactile=np.asarray(self.tactile[i], dtype=np.float64),
            audio=np.asarray(self.audio[i], dtype=np.float64),
            pose=Pose6D(self.poses[i, :3], self.poses[i, 3:]),
            timestamp=float(self.timestamps[i]),
        )

    def action(self, i: int) -> DeltaAction:
        return DeltaAction.from_vector(self.actions[i])

    @property
    def success(self) -> bool:
        return bool(self.meta.get("success", False))


def save_trajectory(path, traj: Trajectory) -> None:
    meta = dict(traj.meta)
    meta.update(
        {
            "kind": "trajectory",
            "frame_count": len(traj),
            "tactile_shape": list(traj.tactile.shape[1:]),
            "audio_samples": int(traj.audio.shape[1]),
            "euler_order": "intrinsic-xyz",
            "quaternion_order": "wxyz",
        }
    )
    write_container(
        path,
        meta,
        {
            "poses": np.asarray(traj.poses, dtype=np.float64),
            "actions": np.asarray(traj.actions, dtype=np.float64),
            "tactile": np.asarray(traj.tactile, dtype=np.float32),
            "audio": np.asarray(traj.audio, dtype=np.float32),
            "timestamps": np.asarray(traj.timestamps, dtype=np.float64),
            "blocked": np.asarray(traj.blocked, dtype=np.uint8),
            "slipped": np.asarray(traj.slipped, dtype=np.uint8),
            "contact": np.asarray(traj.contact, dtype=np.uint8),
        },
    )


def load_trajectory(path) -> Trajectory:
    meta, blocks = read_container(path)
    if meta.get("kind") != "trajectory":
        raise ValueError(f"{path}: not a trajectory file")
    return Trajectory(
        poses=blocks["poses"],
        actions=blocks["actions"],
        tactile=blocks["tactile"],
        audio=blocks["audio"],
        timestamps=blocks["timestamps"],
        blocked=blocks["blocked"],
        slipped=blocks["slipped"],
        contact=blocks["contact"],
        meta=meta,
    )


# ---------------------------------------------------------------------------
# Test-time corruption
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    """Perturbation protocol for held-out evaluation sequences.

    Positions shift uniformly per axis; tactile and audio get Gaussian noise
    clamped back into their native ranges.  All-zero settings are a no-op.
    """

    position_range_m: float = 0.03
    tactile_sigma: float = 100.0
    audio_sigma: float = 0.4
    tactile_range: tuple[float, float] = (0.0, 255.0)
    audio_range: tuple[float, float] = (0.0, 1.0)


def inject_test_noise(traj: Trajectory, spec: NoiseSpec, seed: int) -> Trajectory:
    """Return a corrupted copy of traj; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    poses = np.array(traj.poses, dtype=np.float64)
    tactile = np.array(traj.tactile, dtype=np.float64)
    audio = np.array(traj.audio, dtype=np.float64)
    n = len(traj)
    if spec.position_range_m > 0:
        poses[:, :3] += rng.uniform(-spec.position_range_m, spec.position_range_m, (n, 3))
    if spec.tactile_sigma > 0:
        tactile = np.clip(tactile + rng.normal(0.0, spec.tactile_sigma, tactile.shape), *spec.tactile_range)
    if spec.audio_sigma > 0:
        audio = np.clip(audio + rng.normal(0.0, spec.audio_sigma, audio.shape), *spec.audio_range)
    return Trajectory(
        poses=poses,
        actions=np.array(traj.actions),
        tactile=tactile,
        audio=audio,
        timestamps=np.array(traj.timestamps),
        blocked=np.array(traj.blocked),
        slipped=np.array(traj.slipped),
        contact=np.array(traj.contact),
        meta={**traj.meta, "noise_seed": seed},
    )
