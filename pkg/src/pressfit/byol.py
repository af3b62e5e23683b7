"""Bootstrap representation learning for the contact modalities.

An online encoder/projector/predictor chain regresses an EMA target's
projections under different augmented views; the loss is the squared
distance between l2-normalized predictor outputs and stopped-gradient
target projections, symmetrized over the view pair.  A fixed Gaussian
random projection serves as the untrained baseline encoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pressfit.container import read_container, write_container
from pressfit.nets import MLP, Sgd, ema_update


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.maximum(np.linalg.norm(x, axis=1, keepdims=True), 1e-12)
    return x / norms


def byol_pair_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared distance between l2-normalized rows.

    Identical rows give 0; orthogonal rows give exactly 2.
    """
    u = _normalize_rows(np.atleast_2d(np.asarray(pred, dtype=np.float64)))
    t = _normalize_rows(np.atleast_2d(np.asarray(target, dtype=np.float64)))
    if u.shape != t.shape:
        raise ValueError("prediction/target shape mismatch")
    return float(np.mean(np.sum((u - t) ** 2, axis=1)))


@dataclass
class ByolConfig:
    in_dim: int
    emb_dim: int = 128
    proj_dim: int = 32
    encoder_hidden: list[int] = field(default_factory=lambda: [256])
    head_hidden: int = 64
    tau: float = 0.99
    lr: float = 0.05
    momentum: float = 0.9


class ByolTrainer:
    """Online f/g/q networks against EMA targets f'/g'."""

    def __init__(self, cfg: ByolConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.encoder = MLP([cfg.in_dim, *cfg.encoder_hidden, cfg.emb_dim], rng)
        self.projector = MLP([cfg.emb_dim, cfg.head_hidden, cfg.proj_dim], rng)
        self.predictor = MLP([cfg.proj_dim, cfg.head_hidden, cfg.proj_dim], rng)
        self.target_encoder = self.encoder.clone()
        self.target_projector = self.projector.clone()
        self._opt = Sgd(
            self.encoder.params() + self.projector.params() + self.predictor.params(),
            lr=cfg.lr,
            momentum=cfg.momentum,
        )

    # ---- forward-only paths ----

    def _target_projection(self, views: np.ndarray) -> np.ndarray:
        return _normalize_rows(self.target_projector.forward(self.target_encoder.forward(views)))

    def loss_only(self, v1: np.ndarray, v2: np.ndarray) -> float:
        t2 = self._target_projection(v2)
        t1 = self._target_projection(v1)
        p1 = self.predictor.forward(self.projector.forward(self.encoder.forward(v1)))
        l1 = byol_pair_loss(p1, t2)
        p2 = self.predictor.forward(self.projector.forward(self.encoder.forward(v2)))
        l2 = byol_pair_loss(p2, t1)
        return 0.5 * (l1 + l2)

    # ---- gradients ----

    def _branch(self, views: np.ndarray, target: np.ndarray, weight: float) -> float:
        emb = self.encoder.forward(views)
        proj = self.projector.forward(emb)
        pred = self.predictor.forward(proj)
        norms = np.maximum(np.linalg.norm(pred, axis=1, keepdims=True), 1e-12)
        u = pred / norms
        diff = u - target
        loss = float(np.mean(np.sum(diff**2, axis=1)))
        # d/dp ||u - t||^2 = (2 / ||p||) (diff - u (u . diff)); the u-parallel
        # part drops out because normalization is scale invariant
        dot = np.sum(u * diff, axis=1, keepdims=True)
        grad = weight * (2.0 / len(views)) * (diff - u * dot) / norms
        self.encoder.backward(self.projector.backward(self.predictor.backward(grad)))
        return loss

    def compute_gradients(self, v1: np.ndarray, v2: np.ndarray) -> float:
        """Populate online-network gradients; returns the symmetrized loss."""
        for net in (self.encoder, self.projector, self.predictor):
            net.zero_grad()
        t2 = self._target_projection(v2)
        t1 = self._target_projection(v1)
        l1 = self._branch(v1, t2, 0.5)
        l2 = self._branch(v2, t1, 0.5)
        return 0.5 * (l1 + l2)

    def step(self, v1: np.ndarray, v2: np.ndarray) -> float:
        loss = self.compute_gradients(v1, v2)
        self._opt.step()
        ema_update(self.target_encoder, self.encoder, self.cfg.tau)
        ema_update(self.target_projector, self.projector, self.cfg.tau)
        return loss

    # ---- flat parameter views over the online chain (for checks) ----

    def get_flat(self) -> np.ndarray:
        return np.concatenate(
            [self.encoder.get_flat(), self.projector.get_flat(), self.predictor.get_flat()]
        )

    def set_flat(self, flat: np.ndarray) -> None:
        sizes = [len(n.get_flat()) for n in (self.encoder, self.projector, self.predictor)]
        a, b = sizes[0], sizes[0] + sizes[1]
        self.encoder.set_flat(flat[:a])
        self.projector.set_flat(flat[a:b])
        self.predictor.set_flat(flat[b:])

    def grad_flat(self) -> np.ndarray:
        return np.concatenate(
            [self.encoder.grad_flat(), self.projector.grad_flat(), self.predictor.grad_flat()]
        )


def train_byol(
    trainer: ByolTrainer,
    make_views,
    steps: int,
    rng: np.random.Generator,
) -> list[float]:
    """Run `steps` updates; make_views(rng) -> (v1, v2) batches."""
    losses = []
    for _ in range(steps):
        v1, v2 = make_views(rng)
        losses.append(trainer.step(v1, v2))
    return losses


# ---------------------------------------------------------------------------
# Encoders used by the retrieval policy
# ---------------------------------------------------------------------------


class RandomProjectionEncoder:
    """Fixed Gaussian projection, entries N(0, 1) / sqrt(out_dim).

    Rows act on the input, so each input coordinate's image (a column of
    the matrix) has near-unit norm and pairwise distances are preserved up
    to the usual Johnson-Lindenstrauss distortion.
    """

    kind = "random"

    def __init__(self, in_dim: int, out_dim: int, seed: int):
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        self.matrix = rng.standard_normal((self.out_dim, self.in_dim)) / np.sqrt(self.out_dim)

    def encode(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.in_dim:
            raise ValueError(f"encoder expects {self.in_dim} features, got {x.shape[1]}")
        return x @ self.matrix.T


class MlpEncoder:
    """Trained encoder: the online network lifted out of a ByolTrainer."""

    kind = "mlp"

    def __init__(self, net: MLP):
        self.net = net
        self.in_dim = net.dims[0]
        self.out_dim = net.dims[-1]

    def encode(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.in_dim:
            raise ValueError(f"encoder expects {self.in_dim} features, got {x.shape[1]}")
        return self.net.forward(x)


def save_encoder(path: str | Path, enc) -> None:
    if enc.kind == "random":
        write_container(
            path,
            {"kind": "encoder", "encoder": "random", "in_dim": enc.in_dim, "out_dim": enc.out_dim, "seed": enc.seed},
            {"matrix": enc.matrix},
        )
    elif enc.kind == "mlp":
        blocks = {}
        for i, layer in enumerate(enc.net.layers):
            blocks[f"w{i}"] = layer.w
            blocks[f"b{i}"] = layer.b
        write_container(path, {"kind": "encoder", "encoder": "mlp", "dims": enc.net.dims}, blocks)
    else:
        raise ValueError(f"unknown encoder kind {enc.kind!r}")


def load_encoder(path: str | Path):
    meta, blocks = read_container(path)
    if meta.get("kind") != "encoder":
        raise ValueError(f"{path}: not an encoder checkpoint")
    if meta["encoder"] == "random":
        enc = RandomProjectionEncoder(meta["in_dim"], meta["out_dim"], meta["seed"])
        enc.matrix = blocks["matrix"]
        return enc
    net = MLP(list(meta["dims"]), np.random.default_rng(0))
    for i, layer in enumerate(net.layers):
        layer.w[...] = blocks[f"w{i}"]
        layer.b[...] = blocks[f"b{i}"]
    return MlpEncoder(net)
