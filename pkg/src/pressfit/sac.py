"""Soft actor-critic over residual corrections to a retrieval policy.

The actor emits a box-bounded residual a = limits * tanh(mu + sigma * eps);
twin critics score (state, retrieved action, residual) triples against a
Polyak-averaged target pair.  Gradients are derived by hand through the
tanh squash and the soft log-std clamp so they stay finite-difference
checkable end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pressfit.nets import MLP, Adam, ema_update

LOG_STD_RANGE = (-5.0, 2.0)
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


@dataclass
class SacConfig:
    state_dim: int
    action_limits: np.ndarray
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    gamma: float = 0.95
    polyak: float = 0.995
    batch_size: int = 256
    alpha: float = 0.05


class SquashedGaussianActor:
    """Mean/log-std heads share one MLP; the mean head starts at zero.

    A zero mean head makes the deterministic residual exactly zero, so an
    untrained agent reproduces the base policy it is meant to correct.
    """

    def __init__(self, cfg: SacConfig, rng: np.random.Generator):
        self.limits = np.asarray(cfg.action_limits, dtype=np.float64)
        self.adim = len(self.limits)
        self.net = MLP([cfg.state_dim, *cfg.hidden, 2 * self.adim], rng)
        head = self.net.layers[-1]
        head.w[:, : self.adim] = 0.0
        head.b[: self.adim] = 0.0

    def heads(self, states: np.ndarray):
        out = self.net.forward(states)
        mu = out[:, : self.adim]
        raw = out[:, self.adim :]
        lo, hi = LOG_STD_RANGE
        gate = _sigmoid(raw)
        log_std = lo + (hi - lo) * gate
        return mu, log_std, gate

    def mean_action(self, states: np.ndarray) -> np.ndarray:
        mu, _, _ = self.heads(np.atleast_2d(states))
        return self.limits * np.tanh(mu)

    def sample(self, states: np.ndarray, eps: np.ndarray):
        """Reparameterized draw with caller-supplied unit normals."""
        mu, log_std, _ = self.heads(states)
        sigma = np.exp(log_std)
        u = mu + sigma * eps
        t = np.tanh(u)
        actions = self.limits * t
        logp = np.sum(
            -0.5 * eps**2
            - log_std
            - _HALF_LOG_2PI
            - 2.0 * (np.log(2.0) - u - _softplus(-2.0 * u))
            - np.log(self.limits),
            axis=1,
        )
        return actions, logp


class ReplayBuffer:
    """Whole episodes, so updates can mix fresh and replayed experience."""

    FIELDS = (
        "states",
        "offline_actions",
        "residuals",
        "rewards",
        "next_states",
        "next_offline_actions",
        "dones",
    )

    def __init__(self):
        self.episodes: list[dict[str, np.ndarray]] = []

    def add_episode(self, episode: dict[str, np.ndarray]) -> None:
        missing = set(self.FIELDS) - set(episode)
        if missing:
            raise ValueError(f"episode missing fields: {sorted(missing)}")
        self.episodes.append({k: np.asarray(episode[k], dtype=np.float64) for k in self.FIELDS})

    def __len__(self) -> int:
        return len(self.episodes)

    def training_pool(self, rng: np.random.Generator, newest: int = 5, replayed: int = 5):
        """Transitions of the newest episodes plus a uniform sample of older ones."""
        if not self.episodes:
            raise ValueError("replay buffer is empty")
        picked = list(range(max(0, len(self.episodes) - newest), len(self.episodes)))
        older = np.arange(len(self.episodes) - len(picked))
        if len(older) > 0:
            take = min(replayed, len(older))
            picked.extend(int(i) for i in rng.choice(older, size=take, replace=False))
        pool = {k: np.concatenate([self.episodes[i][k] for i in picked]) for k in self.FIELDS}
        return pool, picked

    @staticmethod
    def sample_batch(pool: dict[str, np.ndarray], batch_size: int, rng: np.random.Generator):
        n = len(pool["rewards"])
        idx = rng.integers(0, n, size=min(batch_size, n))
        return {k: v[idx] for k, v in pool.items()}


class SacAgent:
    def __init__(self, cfg: SacConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.actor = SquashedGaussianActor(cfg, rng)
        in_dim = cfg.state_dim + 2 * self.actor.adim
        self.critic1 = MLP([in_dim, *cfg.hidden, 1], rng)
        self.critic2 = MLP([in_dim, *cfg.hidden, 1], rng)
        self.target1 = self.critic1.clone()
        self.target2 = self.critic2.clone()
        self._actor_opt = Adam(self.actor.net.params(), lr=cfg.actor_lr)
        self._critic_opt = Adam(self.critic1.params() + self.critic2.params(), lr=cfg.critic_lr)

    # ---- acting ----

    def act(self, state: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        state = np.atleast_2d(state)
        if rng is None:
            return self.actor.mean_action(state)[0]
        eps = rng.standard_normal((len(state), self.actor.adim))
        actions, _ = self.actor.sample(state, eps)
        return actions[0]

    # ---- losses ----

    @staticmethod
    def _critic_inputs(states, offline_actions, residuals) -> np.ndarray:
        return np.concatenate([states, offline_actions, residuals], axis=1)

    def bellman_targets(self, batch: dict[str, np.ndarray], eps: np.ndarray) -> np.ndarray:
        nxt, logp = self.actor.sample(batch["next_states"], eps)
        x = self._critic_inputs(batch["next_states"], batch["next_offline_actions"], nxt)
        q = np.minimum(self.target1.forward(x), self.target2.forward(x))[:, 0]
        soft = q - self.cfg.alpha * logp
        return batch["rewards"] + self.cfg.gamma * (1.0 - batch["dones"]) * soft

    def critic_loss_only(self, batch, targets) -> float:
        x = self._critic_inputs(batch["states"], batch["offline_actions"], batch["residuals"])
        q1 = self.critic1.forward(x)[:, 0]
        q2 = self.critic2.forward(x)[:, 0]
        return float(np.mean((q1 - targets) ** 2) + np.mean((q2 - targets) ** 2))

    def critic_loss_and_grad(self, batch, targets) -> float:
        self.critic1.zero_grad()
        self.critic2.zero_grad()
        x = self._critic_inputs(batch["states"], batch["offline_actions"], batch["residuals"])
        n = len(targets)
        q1 = self.critic1.forward(x)[:, 0]
        q2 = self.critic2.forward(x)[:, 0]
        self.critic1.backward((2.0 * (q1 - targets) / n)[:, None])
        self.critic2.backward((2.0 * (q2 - targets) / n)[:, None])
        return float(np.mean((q1 - targets) ** 2) + np.mean((q2 - targets) ** 2))

    def actor_loss_only(self, batch, eps) -> float:
        residuals, logp = self.actor.sample(batch["states"], eps)
        x = self._critic_inputs(batch["states"], batch["offline_actions"], residuals)
        qmin = np.minimum(self.critic1.forward(x), self.critic2.forward(x))[:, 0]
        return float(np.mean(self.cfg.alpha * logp - qmin))

    def actor_loss_and_grad(self, batch, eps) -> float:
        self.actor.net.zero_grad()
        states = batch["states"]
        n = len(states)
        mu, log_std, gate = self.actor.heads(states)
        sigma = np.exp(log_std)
        u = mu + sigma * eps
        t = np.tanh(u)
        residuals = self.actor.limits * t
        logp = np.sum(
            -0.5 * eps**2
            - log_std
            - _HALF_LOG_2PI
            - 2.0 * (np.log(2.0) - u - _softplus(-2.0 * u))
            - np.log(self.actor.limits),
            axis=1,
        )

        x = self._critic_inputs(states, batch["offline_actions"], residuals)
        q1 = self.critic1.forward(x)
        q2 = self.critic2.forward(x)
        loss = float(np.mean(self.cfg.alpha * logp - np.minimum(q1, q2)[:, 0]))

        # route -qmin/n through whichever critic is active per sample
        pick1 = (q1 <= q2).astype(np.float64)
        gin = self.critic1.backward(-pick1 / n) + self.critic2.backward(-(1.0 - pick1) / n)
        g_res = gin[:, -self.actor.adim :]
        self.critic1.zero_grad()
        self.critic2.zero_grad()

        # d logp / du = 2 tanh(u); d residual / du = limits (1 - t^2)
        du = (self.cfg.alpha / n) * 2.0 * t + g_res * self.actor.limits * (1.0 - t**2)
        g_mu = du
        g_log_std = du * sigma * eps - (self.cfg.alpha / n)
        lo, hi = LOG_STD_RANGE
        g_raw = g_log_std * (hi - lo) * gate * (1.0 - gate)
        self.actor.net.backward(np.concatenate([g_mu, g_raw], axis=1))
        return loss

    # ---- one optimization step ----

    def update(self, batch: dict[str, np.ndarray], rng: np.random.Generator) -> dict[str, float]:
        n = len(batch["rewards"])
        eps_next = rng.standard_normal((n, self.actor.adim))
        targets = self.bellman_targets(batch, eps_next)
        critic_loss = self.critic_loss_and_grad(batch, targets)
        self._critic_opt.step()

        eps = rng.standard_normal((n, self.actor.adim))
        actor_loss = self.actor_loss_and_grad(batch, eps)
        self._actor_opt.step()

        ema_update(self.target1, self.critic1, self.cfg.polyak)
        ema_update(self.target2, self.critic2, self.cfg.polyak)
        return {"critic_loss": critic_loss, "actor_loss": actor_loss}
