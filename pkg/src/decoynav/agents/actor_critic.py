"""Entropy-regularised actor-critic subagents (categorical and squashed Gaussian)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..env import N_ACTIONS, Scenario
from .nets import MLP, Adam
from .replay import Batch, ReplayBuffer, absorbing

LOG_STD_MIN, LOG_STD_MAX = -5.0, 1.0
_TANH_EPS = 1e-6
_LOG_2PI = math.log(2.0 * math.pi)


class TrainingDivergence(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class AcConfig:
    gamma: float = 0.99
    lr: float = 3e-4
    alpha_discrete: float = 0.2
    alpha_continuous: float = 0.01
    rho: float = 0.01
    minibatch: int = 100
    horizon: int = 4000
    hidden: tuple = (64, 64)
    capacity: int = 10**6

    def __post_init__(self):
        for name in ("gamma", "lr", "rho", "minibatch", "horizon", "capacity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        # alpha = 0 is allowed and recovers the plain actor-critic targets
        if self.alpha_discrete < 0 or self.alpha_continuous < 0:
            raise ValueError("entropy coefficients must be nonnegative")

    def alpha(self, mode: str) -> float:
        return self.alpha_discrete if mode == "discrete" else self.alpha_continuous


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


class _AcBase:
    kind = "ac"

    def __init__(self, scn: Scenario, index: int, cfg: AcConfig, seed: int):
        self.index = index
        self.cfg = cfg
        self.alpha = cfg.alpha(self.mode)
        self.size = np.array([scn.map.width, scn.map.height], dtype=float)
        self.goal = scn.candidates.goals[index]
        self.goal_radius = None if self.mode == "discrete" else scn.goal_radius
        self.rng = np.random.default_rng(seed)
        self.buffer = ReplayBuffer(cfg.capacity, action_dim=0 if self.mode == "discrete" else 2)
        self._build()
        self.target = MLP(1, 1, self.cfg.hidden)
        self.target.copy_from(self.critic)
        self.actor_opt = Adam(self.actor.params, cfg.lr)
        self.critic_opt = Adam(self.critic.params, cfg.lr)

    def encode(self, s) -> np.ndarray:
        s = np.atleast_2d(np.asarray(s, dtype=float))
        offset = 0.5 if self.mode == "discrete" else 0.0
        return 2.0 * (s + offset) / self.size - 1.0

    def learn(self, batch: Batch, noise=None) -> dict:
        """One gradient step on critic then actor, then the target-network update."""
        critic_loss, cgrads = self.critic_loss_grad(batch, noise)
        self.critic_opt.step(self.critic.params, cgrads)
        actor_loss, agrads, ent = self.actor_loss_grad(batch, noise)
        self.actor_opt.step(self.actor.params, agrads)
        self.target.soft_update(self.critic, self.cfg.rho)
        diag = {"critic_loss": critic_loss, "actor_loss": actor_loss, "entropy": ent}
        if not all(np.isfinite(v) for v in diag.values()):
            raise TrainingDivergence(f"non-finite loss in subagent {self.index}", diag)
        return diag

    def update(self, n_updates: int, rng) -> dict:
        diag = {}
        if len(self.buffer) == 0:
            return diag
        for _ in range(n_updates):
            diag = self.learn(self.buffer.sample(self.cfg.minibatch, rng))
        return diag

    def state_dict(self) -> dict:
        out = {}
        for name in ("actor", "critic", "target"):
            for i, p in enumerate(getattr(self, name).params):
                out[f"{name}.{i}"] = p
        return out

    def load_state_dict(self, state: dict) -> None:
        for name in ("actor", "critic", "target"):
            net = getattr(self, name)
            net.params = [np.array(state[f"{name}.{i}"], dtype=float).reshape(p.shape) for i, p in enumerate(net.params)]
        self.actor_opt = Adam(self.actor.params, self.cfg.lr)
        self.critic_opt = Adam(self.critic.params, self.cfg.lr)


class DiscreteAcSubagent(_AcBase):
    """Categorical actor over the 8 moves with a critic giving ``Q(s, .)``."""

    mode = "discrete"

    def _build(self):
        self.actor = MLP(2, N_ACTIONS, self.cfg.hidden, self.rng, out_scale=0.1)
        self.critic = MLP(2, N_ACTIONS, self.cfg.hidden, self.rng)

    def policy(self, s) -> np.ndarray:
        return np.exp(_log_softmax(self.actor(self.encode(s))))[0]

    def sample(self, s, rng) -> int:
        c = np.cumsum(self.policy(s))
        return min(int(np.searchsorted(c, rng.random() * c[-1], side="right")), N_ACTIONS - 1)

    def act(self, s) -> int:
        return int(np.argmax(self.policy(s)))

    def q_row(self, s) -> np.ndarray:
        return self.critic(self.encode(s))[0]

    def qvalue(self, s, a) -> float:
        return float(self.q_row(s)[int(a)])

    def critic_target(self, batch: Batch) -> np.ndarray:
        logp2 = _log_softmax(self.actor(self.encode(batch.s_next)))
        q2 = self.target(self.encode(batch.s_next))
        v2 = (np.exp(logp2) * (q2 - self.alpha * logp2)).sum(axis=1)
        return batch.r + self.cfg.gamma * np.where(absorbing(batch, self.goal, self.goal_radius), 0.0, v2)

    def critic_loss_grad(self, batch: Batch, noise=None):
        y = self.critic_target(batch)
        q, cache = self.critic.forward(self.encode(batch.s))
        idx = np.arange(len(y))
        a = batch.a.astype(int)
        err = q[idx, a] - y
        dq = np.zeros_like(q)
        dq[idx, a] = err / len(y)
        grads, _ = self.critic.backward(dq, cache)
        return 0.5 * float(np.mean(err**2)), grads

    def actor_loss_grad(self, batch: Batch, noise=None):
        x = self.encode(batch.s)
        q = self.critic(x)
        z, cache = self.actor.forward(x)
        logp = _log_softmax(z)
        p = np.exp(logp)
        g = self.alpha * logp - q
        loss = float(np.mean((p * g).sum(axis=1)))
        dz = p * (g - (p * g).sum(axis=1, keepdims=True)) / len(x)
        grads, _ = self.actor.backward(dz, cache)
        ent = float(np.mean(-(p * logp).sum(axis=1)))
        return loss, grads, ent


def _displacement(y):
    """Map squashed actions ``y in (-1, 1)^2`` to ``(theta, v)`` displacements."""
    phi = math.pi * (y[:, 0] + 1.0)
    return np.stack([y[:, 1] * np.cos(phi), y[:, 1] * np.sin(phi)], axis=1)


def _action_displacement(a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return np.stack([a[:, 1] * np.cos(a[:, 0]), a[:, 1] * np.sin(a[:, 0])], axis=1)


def squashed_to_action(y) -> np.ndarray:
    y = np.atleast_2d(y)
    return np.stack([math.pi * (y[:, 0] + 1.0), y[:, 1]], axis=1)


class ContinuousAcSubagent(_AcBase):
    """Squashed Gaussian actor over ``(theta, v)``; the critic sees the displacement vector."""

    mode = "continuous"

    def _build(self):
        self.actor = MLP(2, 4, self.cfg.hidden, self.rng, out_scale=0.1)
        self.critic = MLP(4, 1, self.cfg.hidden, self.rng)

    def _dist(self, x):
        out, cache = self.actor.forward(x)
        mu, raw = out[:, :2], out[:, 2:]
        t = np.tanh(raw)
        log_std = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (t + 1.0)
        return mu, log_std, t, cache

    def _squash(self, mu, log_std, eps):
        u = mu + np.exp(log_std) * eps
        y = np.tanh(u)
        logp = (-0.5 * eps**2 - log_std - 0.5 * _LOG_2PI).sum(axis=1) - np.log(1.0 - y**2 + _TANH_EPS).sum(axis=1)
        return y, logp

    def sample(self, s, rng) -> np.ndarray:
        mu, log_std, _, _ = self._dist(self.encode(s))
        y, _ = self._squash(mu, log_std, rng.standard_normal(mu.shape))
        return squashed_to_action(y)[0]

    def act(self, s) -> np.ndarray:
        mu, _, _, _ = self._dist(self.encode(s))
        return squashed_to_action(np.tanh(mu))[0]

    def qvalue(self, s, a) -> float:
        return float(self.critic(np.hstack([self.encode(s), _action_displacement(a)]))[0, 0])

    def critic_target(self, batch: Batch, noise=None) -> np.ndarray:
        x2 = self.encode(batch.s_next)
        mu, log_std, _, _ = self._dist(x2)
        eps = noise[1] if noise is not None else self.rng.standard_normal(mu.shape)
        y2, logp2 = self._squash(mu, log_std, eps)
        q2 = self.target(np.hstack([x2, _displacement(y2)]))[:, 0]
        return batch.r + self.cfg.gamma * np.where(absorbing(batch, self.goal, self.goal_radius), 0.0, q2 - self.alpha * logp2)

    def critic_loss_grad(self, batch: Batch, noise=None):
        y = self.critic_target(batch, noise)
        q, cache = self.critic.forward(np.hstack([self.encode(batch.s), _action_displacement(batch.a)]))
        err = q[:, 0] - y
        grads, _ = self.critic.backward((err / len(y))[:, None], cache)
        return 0.5 * float(np.mean(err**2)), grads

    def actor_loss_grad(self, batch: Batch, noise=None):
        x = self.encode(batch.s)
        B = len(x)
        mu, log_std, t, acache = self._dist(x)
        eps = noise[0] if noise is not None else self.rng.standard_normal(mu.shape)
        y, logp = self._squash(mu, log_std, eps)
        disp = _displacement(y)
        q, ccache = self.critic.forward(np.hstack([x, disp]))
        loss = float(np.mean(self.alpha * logp - q[:, 0]))
        # dQ/d(displacement) through the critic, then chain to the squashed action
        _, dx = self.critic.backward(np.ones((B, 1)), ccache)
        dd = dx[:, 2:]
        phi = math.pi * (y[:, 0] + 1.0)
        dq_dy = np.stack([
            math.pi * y[:, 1] * (-dd[:, 0] * np.sin(phi) + dd[:, 1] * np.cos(phi)),
            dd[:, 0] * np.cos(phi) + dd[:, 1] * np.sin(phi),
        ], axis=1)
        dlogp_dy = 2.0 * y / (1.0 - y**2 + _TANH_EPS)
        df_du = (self.alpha * dlogp_dy - dq_dy) * (1.0 - y**2)
        std = np.exp(log_std)
        df_dlogstd = df_du * std * eps - self.alpha
        df_draw = df_dlogstd * 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - t**2)
        grads, _ = self.actor.backward(np.hstack([df_du, df_draw]) / B, acache)
        return loss, grads, float(-np.mean(logp))


def make_ac_subagent(scn: Scenario, index: int, cfg: AcConfig = AcConfig(), seed: int = 0):
    cls = DiscreteAcSubagent if scn.mode == "discrete" else ContinuousAcSubagent
    return cls(scn, index, cfg, seed)
