"""Behavior cloning baseline: feature rows in, denormalized actions out.

Targets are min-max normalized per component and shifted by -0.5 before
regression, so an untrained (all-zero) network already emits mid-range
actions instead of a corner of the action box.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pressfit.container import read_container, write_container
from pressfit.geometry import NormalizationScales, minmax_denormalize, minmax_normalize
from pressfit.nets import MLP, Adam


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class BcConfig:
    in_dim: int
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    lr: float = 1e-3
    batch_size: int = 64
    steps: int = 2000


class BcPolicy:
    def __init__(self, cfg: BcConfig, scales: NormalizationScales, rng: np.random.Generator):
        self.cfg = cfg
        self.scales = scales
        self.net = MLP([cfg.in_dim, *cfg.hidden, 6], rng)

    def predict(self, features: np.ndarray) -> np.ndarray:
        out = self.net.forward(np.atleast_2d(features))
        return minmax_denormalize(np.clip(out + 0.5, 0.0, 1.0), self.scales)

    def loss_and_grad(self, features: np.ndarray, targets: np.ndarray) -> float:
        """MSE in normalized units; leaves gradients on the network."""
        self.net.zero_grad()
        pred = self.net.forward(features)
        diff = pred - targets
        self.net.backward(2.0 * diff / diff.size)
        return float(np.mean(diff**2))

    def save(self, path: str | Path) -> None:
        blocks = {"lo": self.scales.lo, "hi": self.scales.hi}
        for i, layer in enumerate(self.net.layers):
            blocks[f"w{i}"] = layer.w
            blocks[f"b{i}"] = layer.b
        write_container(path, {"kind": "bc_policy", "dims": self.net.dims}, blocks)

    @classmethod
    def load(cls, path: str | Path) -> "BcPolicy":
        meta, blocks = read_container(path)
        if meta.get("kind") != "bc_policy":
            raise ValueError(f"{path}: not a cloning policy checkpoint")
        dims = list(meta["dims"])
        scales = NormalizationScales(lo=blocks["lo"], hi=blocks["hi"])
        cfg = BcConfig(in_dim=dims[0], hidden=dims[1:-1])
        policy = cls(cfg, scales, np.random.default_rng(0))
        for i, layer in enumerate(policy.net.layers):
            layer.w[...] = blocks[f"w{i}"]
            layer.b[...] = blocks[f"b{i}"]
        return policy


def train_bc(
    policy: BcPolicy,
    features: np.ndarray,
    actions: np.ndarray,
    rng: np.random.Generator,
) -> list[float]:
    """Minibatch regression; aborts if the loss stays 10x above its start."""
    features = np.asarray(features, dtype=np.float64)
    targets = minmax_normalize(np.asarray(actions, dtype=np.float64), policy.scales) - 0.5
    if len(features) != len(targets):
        raise ValueError("feature/action row counts differ")

    opt = Adam(policy.net.params(), lr=policy.cfg.lr)
    batch = min(policy.cfg.batch_size, len(features))
    losses = []
    runaway = 0
    for step in range(policy.cfg.steps):
        idx = rng.choice(len(features), size=batch, replace=False)
        loss = policy.loss_and_grad(features[idx], targets[idx])
        opt.step()
        losses.append(loss)
        if loss > 10.0 * losses[0]:
            runaway += 1
            if runaway >= 50:
                raise TrainingDiverged(
                    f"loss {loss:.3g} stuck above 10x its initial value after step {step}"
                )
        else:
            runaway = 0
    return losses
