"""Blended actor-critic learner.

The executed policy is ``k * supervisor + (1 - k) * actor + noise``. The
critic regresses onto one-step Bellman targets from the target networks;
the actor follows the deterministic policy gradient through the blend
(hence the ``1 - k`` factor) plus a ``lambda``-weighted imitation term.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import nn
from .errors import ConfigError, InvariantBreach, UpdateRejected
from .replay import Batch

SUPERVISED_TARGETS = ("supervisor", "executed")
LAMBDA_MODES = ("slaved", "constant")


@dataclass
class BlendState:
    k: float = 1.0
    lam: float = 1.0
    supervision_active: bool = True
    lambda_mode: str = "slaved"
    lambda_const: float = 1.0

    def __post_init__(self):
        if self.lambda_mode not in LAMBDA_MODES:
            raise ConfigError(f"unknown lambda mode {self.lambda_mode!r}", key="lambda_mode")
        self.set_k(self.k)

    def set_k(self, k: float) -> None:
        if not 0.0 <= k <= 1.0:
            raise ConfigError(f"combination factor must lie in [0, 1], got {k}")
        self.k = float(k)
        if self.k == 0.0:
            self.supervision_active = False
        self.lam = self.k if self.lambda_mode == "slaved" else self.lambda_const
        if not self.supervision_active:
            self.lam = 0.0


class OUNoise:
    """Ornstein-Uhlenbeck exploration noise whose scale decays per episode."""

    def __init__(self, act_dim: int, sigma0, theta: float = 0.15, decay: float = 0.99,
                 dt: float = 1.0):
        self.act_dim = act_dim
        self.sigma0 = np.broadcast_to(np.asarray(sigma0, dtype=np.float64), (act_dim,)).copy()
        self.theta = float(theta)
        self.decay = float(decay)
        self.dt = float(dt)
        self.x = np.zeros(act_dim)
        self.episode = 0
        self.t = 0

    @property
    def sigma(self) -> np.ndarray:
        return self.sigma0 * self.decay ** self.episode

    def start_episode(self, episode: int) -> None:
        """Restart the process for a new episode (0-based index sets the noise scale)."""
        self.episode = int(episode)
        self.x = np.zeros(self.act_dim)
        self.t = 0

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(self.act_dim)
        self.x = self.x + self.theta * (0.0 - self.x) * self.dt + self.sigma * np.sqrt(self.dt) * z
        self.t += 1
        return self.x.copy()

    def state_dict(self) -> dict:
        return {"x": self.x.copy(), "episode": self.episode, "t": self.t}

    def load_state_dict(self, d: dict) -> None:
        self.x = np.asarray(d["x"], dtype=np.float64).reshape(self.act_dim)
        self.episode = int(d["episode"])
        self.t = int(d["t"])


def noise_sample(noise: OUNoise, rng: np.random.Generator) -> np.ndarray:
    return noise.sample(rng)


@dataclass
class AgentNets:
    actor: nn.NetworkParams
    critic: nn.NetworkParams
    actor_target: nn.NetworkParams
    critic_target: nn.NetworkParams
    actor_opt: nn.AdamState
    critic_opt: nn.AdamState
    obs_dim: int
    act_dim: int
    gamma: float = 0.99
    tau: float = 0.001
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    updates: int = field(default=0)


def make_agent_nets(obs_dim: int, act_dim: int, low, high, rng: np.random.Generator,
                    hidden=(64, 64), gamma=0.99, tau=0.001, lr_actor=1e-4,
                    lr_critic=1e-3) -> AgentNets:
    """Actor first, then critic, both drawn from ``rng``; targets start as exact copies."""
    actor = nn.init_params([obs_dim, *hidden, act_dim], "tanh_scaled", rng, low, high)
    critic = nn.init_params([obs_dim + act_dim, *hidden, 1], "linear", rng)
    return AgentNets(actor, critic, actor.copy(), critic.copy(),
                     nn.adam_init(actor), nn.adam_init(critic),
                     obs_dim, act_dim, gamma, tau, lr_actor, lr_critic)


def blend(k: float, sup_action: Optional[np.ndarray], actor_action: np.ndarray) -> np.ndarray:
    if sup_action is None:
        return actor_action
    return k * sup_action + (1.0 - k) * actor_action


def combined_action(nets: AgentNets, supervisor: Callable, blend_state: BlendState, obs,
                    noise: Optional[np.ndarray] = None, low=None, high=None) -> np.ndarray:
    """Executed action for one observation; the supervisor is skipped once supervision is off."""
    mu_a = nn.predict(nets.actor, obs)[0]
    if not np.all(np.isfinite(mu_a)):
        raise InvariantBreach(f"actor produced non-finite action {mu_a}")
    sup = supervisor(obs) if blend_state.supervision_active else None
    a = blend(blend_state.k, sup, mu_a)
    if not np.all(np.isfinite(a)):
        raise InvariantBreach(f"supervisor produced non-finite action {sup}")
    if noise is not None:
        a = a + noise
    if low is None:
        low, high = nets.actor.low, nets.actor.high
    return np.clip(a, low, high)


def critic_targets(batch: Batch, nets: AgentNets) -> np.ndarray:
    """``r + gamma * Q'(s', mu'(s'))``; terminal transitions keep just ``r``."""
    a2 = nn.predict(nets.actor_target, batch.s2)
    q2 = nn.predict(nets.critic_target, np.concatenate([batch.s2, a2], axis=1))[:, 0]
    return batch.r + nets.gamma * np.where(batch.terminal, 0.0, q2)


def critic_gradient(batch: Batch, nets: AgentNets, y: Optional[np.ndarray] = None):
    """Mean squared TD error and its gradient; targets are held constant."""
    if y is None:
        y = critic_targets(batch, nets)
    q, cache = nn.forward(nets.critic, np.concatenate([batch.s, batch.a], axis=1))
    diff = q[:, 0] - y
    n = len(diff)
    loss = float(np.mean(diff * diff))
    grads, _ = nn.backward(nets.critic, cache, (2.0 / n) * diff[:, None])
    return loss, grads


def critic_update(batch: Batch, nets: AgentNets) -> float:
    """One Adam step on the critic; returns the loss before the step."""
    loss, grads = critic_gradient(batch, nets)
    if not np.isfinite(loss):
        raise UpdateRejected("non-finite critic loss")
    nn.adam_step(nets.critic, grads, nets.critic_opt, nets.lr_critic)
    return loss


def actor_gradient(batch: Batch, nets: AgentNets, supervisor: Callable,
                   blend_state: BlendState, supervised_target: str = "supervisor"):
    """Descent direction for the actor.

    The loss being minimised is
    ``-mean Q(s, blend(s)) + lam * 0.5 * mean ||mu_a(s) - target(s)||^2``
    where ``target`` is the supervisor action (default) or, with
    ``supervised_target="executed"``, the gap between the noise-free blend
    and the stored executed action.
    Returns ``(grads, info)``; ``info`` holds the separate term gradients.
    """
    if supervised_target not in SUPERVISED_TARGETS:
        raise ConfigError(f"unknown supervised_target {supervised_target!r}",
                          key="supervised_target")
    s = batch.s
    n = s.shape[0]
    k = blend_state.k
    mu_a, cache_a = nn.forward(nets.actor, s)
    active = blend_state.supervision_active
    mu_s = supervisor(s) if active else None
    a = blend(k, mu_s, mu_a)

    q, cache_q = nn.forward(nets.critic, np.concatenate([s, a], axis=1))
    _, dx = nn.backward(nets.critic, cache_q, np.full((n, 1), 1.0 / n))
    dq_da = dx[:, nets.obs_dim:]
    rl_upstream = -(1.0 - k) * dq_da if active else -dq_da

    sup_upstream = None
    lam = blend_state.lam if active else 0.0
    if active and lam != 0.0:
        if supervised_target == "supervisor":
            gap = mu_a - mu_s
        else:
            gap = a - batch.a
        sup_upstream = (lam / n) * gap

    upstream = rl_upstream if sup_upstream is None else rl_upstream + sup_upstream
    grads, _ = nn.backward(nets.actor, cache_a, upstream)
    info = {"q_mean": float(np.mean(q)), "rl_upstream": rl_upstream,
            "sup_upstream": sup_upstream, "cache": cache_a}
    return grads, info


def actor_update(batch: Batch, nets: AgentNets, supervisor: Callable, blend_state: BlendState,
                 supervised_target: str = "supervisor") -> float:
    """One Adam step on the actor; returns the combined gradient norm."""
    grads, _ = actor_gradient(batch, nets, supervisor, blend_state, supervised_target)
    nn.adam_step(nets.actor, grads, nets.actor_opt, nets.lr_actor)
    return grads.norm()


def end_of_step_updates(nets: AgentNets, tau: Optional[float] = None) -> None:
    tau = nets.tau if tau is None else tau
    nn.soft_update(nets.critic_target, nets.critic, tau)
    nn.soft_update(nets.actor_target, nets.actor, tau)
