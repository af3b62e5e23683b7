"""Minimal MLP machinery with explicit backward passes.

Policies and encoders here are deliberately small, so layers carry their
own gradients and the whole stack stays in numpy where analytic gradients
can be checked against central finite differences.  Hidden activations are
tanh: smooth everywhere, which keeps those checks tight.
"""

from __future__ import annotations

import numpy as np


class Linear:
    """Dense layer y = x W + b with cached input for the backward pass."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.w = rng.normal(0.0, np.sqrt(1.0 / in_dim), size=(in_dim, out_dim))
        self.b = np.zeros(out_dim)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.w + self.b

    def backward(self, g: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise RuntimeError("backward before forward")
        self.gw += self._x.T @ g
        self.gb += g.sum(axis=0)
        return g @ self.w.T

    def params(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.w, self.gw), (self.b, self.gb)]


class MLP:
    """Stack of Linear layers with tanh between them (linear output)."""

    def __init__(self, dims: list[int], rng: np.random.Generator):
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        self.dims = list(dims)
        self.layers = [Linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]
        self._acts: list[np.ndarray] = []

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dims[0]:
            raise ValueError(f"expected (batch, {self.dims[0]}) input, got {x.shape}")
        self._acts = []
        for layer in self.layers[:-1]:
            x = np.tanh(layer.forward(x))
            self._acts.append(x)
        return self.layers[-1].forward(x)

    def backward(self, g: np.ndarray) -> np.ndarray:
        g = self.layers[-1].backward(g)
        for layer, act in zip(reversed(self.layers[:-1]), reversed(self._acts)):
            g = layer.backward(g * (1.0 - act * act))  # tanh' = 1 - tanh^2
        return g

    def params(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [p for layer in self.layers for p in layer.params()]

    def zero_grad(self) -> None:
        for p, g in self.params():
            g[...] = 0.0

    # ---- flat views used by checkpoints and finite-difference checks ----

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p, _ in self.params()])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for p, _ in self.params():
            p[...] = flat[i : i + p.size].reshape(p.shape)
            i += p.size
        if i != len(flat):
            raise ValueError("flat vector size mismatch")

    def grad_flat(self) -> np.ndarray:
        return np.concatenate([g.ravel() for _, g in self.params()])

    def copy_from(self, other: "MLP") -> None:
        for (p, _), (q, _) in zip(self.params(), other.params()):
            p[...] = q

    def clone(self) -> "MLP":
        twin = MLP(self.dims, np.random.default_rng(0))
        twin.copy_from(self)
        return twin


def ema_update(target: MLP, online: MLP, tau: float) -> None:
    """Polyak update: target <- tau * target + (1 - tau) * online."""
    for (t, _), (o, _) in zip(target.params(), online.params()):
        t *= tau
        t += (1.0 - tau) * o


class Sgd:
    """SGD with classical momentum."""

    def __init__(self, params: list[tuple[np.ndarray, np.ndarray]], lr: float, momentum: float = 0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.vel = [np.zeros_like(p) for p, _ in params]

    def step(self) -> None:
        for (p, g), v in zip(self.params, self.vel):
            v *= self.momentum
            v += g
            p -= self.lr * v


class Adam:
    def __init__(
        self,
        params: list[tuple[np.ndarray, np.ndarray]],
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p, _ in params]
        self.v = [np.zeros_like(p) for p, _ in params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for (p, g), m, v in zip(self.params, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def finite_difference_grad(loss_fn, net: MLP, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of loss_fn() w.r.t. the net's parameters."""
    base = net.get_flat()
    out = np.zeros_like(base)
    for i in range(len(base)):
        probe = base.copy()
        probe[i] = base[i] + eps
        net.set_flat(probe)
        hi = loss_fn()
        probe[i] = base[i] - eps
        net.set_flat(probe)
        lo = loss_fn()
        out[i] = (hi - lo) / (2.0 * eps)
    net.set_flat(base)
    return out


def max_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Worst-case elementwise relative difference between gradient vectors."""
    denom = np.maximum(np.abs(a) + np.abs(b), 1e-6)
    return float(np.max(np.abs(a - b) / denom))
