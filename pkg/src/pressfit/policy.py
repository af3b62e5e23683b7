"""Policies over multimodal frames and the rollout loop that drives them.

The retrieval policy carries no parameters of its own: a frame is lifted
into per-modality features, matched against the demo library, and the
stored action of the nearest entry is replayed.  The combined policy
adds a learned residual on top of that retrieved action, clamped to the
safety caps, which is the shape the fine-tuning stage expects.

Feature extraction is the one place that fixes how raw sensors become
query vectors: tactile images are scaled to [0, 1] and flattened, audio
windows are centered and turned into a flattened log-mel patch, poses
contribute translation plus Euler angles.  Library construction and
every policy below must route through the same extractor or retrieval
distances stop meaning anything.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pressfit.byol import MlpEncoder, RandomProjectionEncoder
from pressfit.cloning import BcPolicy
from pressfit.env import PegInHoleEnv
from pressfit.features import Standardizer, log_mel_spectrogram
from pressfit.geometry import Pose6D
from pressfit.library import DemoLibrary, LibraryBuilder
from pressfit.rewards import clamp_residual
from pressfit.sac import SacAgent
from pressfit.trajectory import MultimodalFrame, Trajectory

AUDIO_MIDPOINT = 0.5

# number of mel bands kept after pooling the spectrogram over time; the
# impact tone wanders about ten percent around its center pitch, which
# crosses mel bins but stays inside one coarse band
AUDIO_BANDS = 4

# spectrogram frames entering the audio key; six frames reach back about
# one control step, so the key hears the current contact event and not
# the approach history
AUDIO_RECENT_FRAMES = 6  # observed waveforms are offset-encoded around this

# one radian of wrist rotation swings the tool tip by roughly the tool
# length, so angles scaled by it live on the same metric scale as the
# translation features instead of drowning them
ROTATION_LEVER_M = 0.08


def pose_features(pose: Pose6D) -> np.ndarray:
    feats = pose.features()
    feats[3:] *= ROTATION_LEVER_M
    return feats


@dataclass(frozen=True)
class FrameFeatures:
    tactile: np.ndarray
    audio: np.ndarray
    pose: np.ndarray

    def state(self) -> np.ndarray:
        """Concatenated vector fed to learned policies."""
        return np.concatenate([self.pose, self.tactile, self.audio])


class FeatureExtractor:
    """Raw frame -> (tactile embedding, audio embedding, pose features)."""

    def __init__(
        self,
        tactile_encoder: RandomProjectionEncoder | MlpEncoder,
        audio_encoder: RandomProjectionEncoder | MlpEncoder,
        tactile_standardizer: Standardizer | None = None,
        audio_standardizer: Standardizer | None = None,
    ):
        self.tactile_encoder = tactile_encoder
        self.audio_encoder = audio_encoder
        self.tactile_standardizer = tactile_standardizer
        self.audio_standardizer = audio_standardizer

    @staticmethod
    def tactile_input(tactile: np.ndarray) -> np.ndarray:
        return np.asarray(tactile, dtype=np.float64).ravel() / 255.0

    @staticmethod
    def audio_input(audio: np.ndarray) -> np.ndarray:
        # RMS amplitude over coarse mel bands of the newest spectrogram
        # frames.  Coarse bands keep an impact in one band however far its
        # pitch wanders, and amplitude (unlike log power) keeps loudness
        # differences between two impacts small next to the
        # silence-versus-impact contrast.  Only the tail of the window
        # enters the key: the rest is history, and two visits to the same
        # state rarely share a history, so a longer view would pull
        # retrieval toward frames that merely heard the same thing a few
        # steps ago
        samples = np.asarray(audio, dtype=np.float64) - AUDIO_MIDPOINT
        mel = log_mel_spectrogram(samples)
        power = np.exp(mel)[-AUDIO_RECENT_FRAMES:].mean(axis=0)
        return np.sqrt(power.reshape(AUDIO_BANDS, -1).sum(axis=1))

    def tactile_embedding(self, tactile: np.ndarray) -> np.ndarray:
        x = self.tactile_input(tactile)
        if self.tactile_standardizer is not None:
            x = self.tactile_standardizer.apply(x)
        return self.tactile_encoder.encode(x)[0]

    def audio_embedding(self, audio: np.ndarray) -> np.ndarray:
        x = self.audio_input(audio)
        if self.audio_standardizer is not None:
            x = self.audio_standardizer.apply(x)
        return self.audio_encoder.encode(x)[0]

    def extract(self, frame: MultimodalFrame) -> FrameFeatures:
        return FrameFeatures(
            tactile=self.tactile_embedding(frame.tactile),
            audio=self.audio_embedding(frame.audio),
            pose=pose_features(frame.pose),
        )

    @property
    def state_dim(self) -> int:
        return 6 + self.tactile_encoder.out_dim + self.audio_encoder.out_dim


def build_library(
    demos: list[Trajectory], extractor: FeatureExtractor, successes_only: bool = True
) -> DemoLibrary:
    """Index demo frames for retrieval; failed demos are skipped by default."""
    builder = LibraryBuilder()
    kept = 0
    for traj_id, traj in enumerate(demos):
        if successes_only and not traj.meta.get("success", False):
            continue
        n = len(traj.actions)
        tactile = np.stack([extractor.tactile_embedding(t) for t in traj.tactile[:n]])
        audio = np.stack([extractor.audio_embedding(a) for a in traj.audio[:n]])
        pose = np.stack(
            [pose_features(Pose6D(traj.poses[i, :3], traj.poses[i, 3:])) for i in range(n)]
        )
        builder.add_trajectory(traj_id, tactile, audio, pose, traj.actions)
        kept += 1
    if kept == 0:
        raise ValueError("no successful demos to index")
    return builder.build()


class OfflinePolicy:
    """Nearest-neighbor retrieval over the demo library."""

    def __init__(
        self,
        library: DemoLibrary,
        extractor: FeatureExtractor,
        use_tactile: bool = True,
        use_audio: bool = True,
    ):
        self.library = library
        self.extractor = extractor
        self.use_tactile = use_tactile
        self.use_audio = use_audio

    def act_from_features(self, feats: FrameFeatures) -> tuple[np.ndarray, dict]:
        idx, dist = self.library.nearest(
            feats.tactile, feats.audio, feats.pose, self.use_tactile, self.use_audio
        )
        e = self.library.entry(idx)
        info = {
            "index": idx,
            "traj_id": e.traj_id,
            "serial": e.serial,
            "distance": dist,
        }
        return e.action.copy(), info

    def act(self, frame: MultimodalFrame) -> tuple[np.ndarray, dict]:
        return self.act_from_features(self.extractor.extract(frame))


class CombinedPolicy:
    """Retrieved action plus a clamped learned residual."""

    def __init__(self, offline: OfflinePolicy, agent: SacAgent):
        self.offline = offline
        self.agent = agent

    def act(
        self, frame: MultimodalFrame, rng: np.random.Generator | None = None
    ) -> tuple[np.ndarray, dict]:
        feats = self.offline.extractor.extract(frame)
        base, info = self.offline.act_from_features(feats)
        residual = clamp_residual(self.agent.act(feats.state(), rng))
        info["residual"] = residual
        return base + residual, info


class BcActor:
    """Regression policy adapter so rollouts can drive a cloned network."""

    def __init__(self, bc: BcPolicy, extractor: FeatureExtractor):
        self.bc = bc
        self.extractor = extractor

    def act(self, frame: MultimodalFrame) -> tuple[np.ndarray, dict]:
        state = self.extractor.extract(frame).state()
        return self.bc.predict(state[None, :])[0], {}


@dataclass
class RolloutResult:
    success: bool
    steps: int
    serials: list[int]
    traj_ids: list[int]
    distances: list[float]
    blocked: int
    slipped: int
    final_depth: float
    final_lateral: float


def rollout(env: PegInHoleEnv, policy, seed: int, max_steps: int | None = None) -> RolloutResult:
    """Drive one episode; per-step retrieval info lands in the result."""
    obs = env.reset(seed)
    limit = env.cfg.horizon if max_steps is None else max_steps
    serials: list[int] = []
    traj_ids: list[int] = []
    distances: list[float] = []
    blocked = slipped = steps = 0
    while not env.done and steps < limit:
        action, info = policy.act(obs)
        obs, events, _ = env.step(action)
        steps += 1
        blocked += int(events["blocked"])
        slipped += int(events["slipped"])
        serials.append(int(info.get("serial", -1)))
        traj_ids.append(int(info.get("traj_id", -1)))
        distances.append(float(info.get("distance", np.nan)))
    return RolloutResult(
        success=env.is_success(),
        steps=steps,
        serials=serials,
        traj_ids=traj_ids,
        distances=distances,
        blocked=blocked,
        slipped=slipped,
        final_depth=env.depth(),
        final_lateral=env.lateral_error(),
    )
