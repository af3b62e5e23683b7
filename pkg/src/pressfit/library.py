"""Retrieval policy data structure: embedded demo frames and their actions.

Each entry pairs one demonstration frame (tactile embedding, audio
embedding, pose features) with the action the demonstrator took there.
Queries score candidates by a sum of per-modality Euclidean distances,
each rescaled so the largest in-library pairwise distance is 1; that
keeps a 2048-wide embedding from drowning out the 6 pose numbers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

from pressfit.container import read_container, write_container

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DemoEntry:
    tactile: np.ndarray
    audio: np.ndarray
    pose: np.ndarray
    action: np.ndarray
    traj_id: int
    serial: int


def _modality_scale(block: np.ndarray, name: str) -> float:
    if len(block) < 2:
        log.warning("library has too few entries to scale %s distances", name)
        return 1.0
    largest = float(pdist(block).max())
    if largest == 0.0:
        log.warning("all %s embeddings identical; distances left unscaled", name)
        return 1.0
    return 1.0 / largest


class DemoLibrary:
    """Immutable after build; query is a linear scan over all entries."""

    def __init__(
        self,
        tactile: np.ndarray,
        audio: np.ndarray,
        pose: np.ndarray,
        actions: np.ndarray,
        traj_ids: np.ndarray,
        serials: np.ndarray,
        scales: np.ndarray | None = None,
    ):
        n = len(actions)
        for name, block in (("tactile", tactile), ("audio", audio), ("pose", pose)):
            if block.ndim != 2 or len(block) != n:
                raise ValueError(f"{name} block must be 2-D with {n} rows")
        if pose.shape[1] != 6 or actions.shape != (n, 6):
            raise ValueError("pose and action rows must be 6 wide")
        self.tactile = np.asarray(tactile, dtype=np.float64)
        self.audio = np.asarray(audio, dtype=np.float64)
        self.pose = np.asarray(pose, dtype=np.float64)
        self.actions = np.asarray(actions, dtype=np.float64)
        self.traj_ids = np.asarray(traj_ids, dtype=np.int64)
        self.serials = np.asarray(serials, dtype=np.int64)
        if scales is None:
            scales = np.array(
                [
                    _modality_scale(self.tactile, "tactile"),
                    _modality_scale(self.audio, "audio"),
                    _modality_scale(self.pose, "pose"),
                ]
            )
        self.scales = np.asarray(scales, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.actions)

    def distances(
        self,
        tactile: np.ndarray,
        audio: np.ndarray,
        pose: np.ndarray,
        use_tactile: bool = True,
        use_audio: bool = True,
    ) -> np.ndarray:
        """Scaled distance from the query to every entry; pose always counts."""
        d = self.scales[2] * np.linalg.norm(self.pose - pose, axis=1)
        if use_tactile:
            d = d + self.scales[0] * np.linalg.norm(self.tactile - tactile, axis=1)
        if use_audio:
            d = d + self.scales[1] * np.linalg.norm(self.audio - audio, axis=1)
        return d

    def nearest(
        self,
        tactile: np.ndarray,
        audio: np.ndarray,
        pose: np.ndarray,
        use_tactile: bool = True,
        use_audio: bool = True,
    ) -> tuple[int, float]:
        d = self.distances(tactile, audio, pose, use_tactile, use_audio)
        best = np.flatnonzero(d == d.min())
        if len(best) == 1:
            return int(best[0]), float(d[best[0]])
        # exact ties resolve to the earliest demo moment
        order = np.lexsort((self.serials[best], self.traj_ids[best]))
        return int(best[order[0]]), float(d[best[order[0]]])

    def query(
        self,
        tactile: np.ndarray,
        audio: np.ndarray,
        pose: np.ndarray,
        use_tactile: bool = True,
        use_audio: bool = True,
    ) -> int:
        return self.nearest(tactile, audio, pose, use_tactile, use_audio)[0]

    def entry(self, index: int) -> DemoEntry:
        return DemoEntry(
            tactile=self.tactile[index],
            audio=self.audio[index],
            pose=self.pose[index],
            action=self.actions[index],
            traj_id=int(self.traj_ids[index]),
            serial=int(self.serials[index]),
        )

    # ---- persistence ----

    def save(self, path: str | Path) -> None:
        meta = {
            "kind": "demo_library",
            "entries": len(self),
            "tactile_dim": self.tactile.shape[1],
            "audio_dim": self.audio.shape[1],
        }
        write_container(
            path,
            meta,
            {
                "tactile": self.tactile,
                "audio": self.audio,
                "pose": self.pose,
                "actions": self.actions,
                "traj_ids": self.traj_ids,
                "serials": self.serials,
                "scales": self.scales,
            },
        )

    @classmethod
    def load(cls, path: str | Path) -> "DemoLibrary":
        meta, blocks = read_container(path)
        if meta.get("kind") != "demo_library":
            raise ValueError(f"{path}: not a demo library")
        return cls(
            blocks["tactile"],
            blocks["audio"],
            blocks["pose"],
            blocks["actions"],
            blocks["traj_ids"],
            blocks["serials"],
            scales=blocks["scales"],
        )

    def export_json(self, path: str | Path) -> None:
        """Summary for inspection; embeddings stay in the binary container."""
        per_traj: dict[str, dict] = {}
        for tid in np.unique(self.traj_ids):
            mask = self.traj_ids == tid
            per_traj[str(int(tid))] = {
                "entries": int(mask.sum()),
                "serial_range": [int(self.serials[mask].min()), int(self.serials[mask].max())],
            }
        doc = {
            "entries": len(self),
            "tactile_dim": int(self.tactile.shape[1]),
            "audio_dim": int(self.audio.shape[1]),
            "scales": {
                "tactile": self.scales[0],
                "audio": self.scales[1],
                "pose": self.scales[2],
            },
            "trajectories": per_traj,
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


class LibraryBuilder:
    """Accumulates per-trajectory feature rows, then fixes the scales."""

    def __init__(self):
        self._tactile: list[np.ndarray] = []
        self._audio: list[np.ndarray] = []
        self._pose: list[np.ndarray] = []
        self._actions: list[np.ndarray] = []
        self._ids: list[np.ndarray] = []
        self._serials: list[np.ndarray] = []

    def add_trajectory(
        self,
        traj_id: int,
        tactile: np.ndarray,
        audio: np.ndarray,
        pose: np.ndarray,
        actions: np.ndarray,
    ) -> None:
        n = len(actions)
        if not (len(tactile) == len(audio) == len(pose) == n):
            raise ValueError("feature rows must align with the action rows")
        self._tactile.append(np.atleast_2d(tactile))
        self._audio.append(np.atleast_2d(audio))
        self._pose.append(np.atleast_2d(pose))
        self._actions.append(np.atleast_2d(actions))
        self._ids.append(np.full(n, traj_id, dtype=np.int64))
        self._serials.append(np.arange(n, dtype=np.int64))

    def build(self) -> DemoLibrary:
        if not self._actions:
            raise ValueError("no trajectories added")
        return DemoLibrary(
            np.concatenate(self._tactile),
            np.concatenate(self._audio),
            np.concatenate(self._pose),
            np.concatenate(self._actions),
            np.concatenate(self._ids),
            np.concatenate(self._serials),
        )
