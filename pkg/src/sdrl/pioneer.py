"""Pioneer network: a copy of the learner trained so that the blend at the
*next* combination factor reproduces past high-return behaviour, swapped in
for the learner when the factor decays."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import nn
from .agent import AgentNets, BlendState
from .errors import ConfigError, UsageError
from .replay import Batch

log = logging.getLogger(__name__)

SCHEDULE_MODES = ("interval", "score_triggered")


@dataclass
class DecaySchedule:
    mode: str = "interval"
    decay_fraction: float = 0.06
    interval_episodes: int = 4
    target_score: float = 0.0
    patience: int = 5
    cutoff: float = 0.01
    decays: int = 0
    since_decay: int = 0
    finished: bool = False

    def __post_init__(self):
        if self.mode not in SCHEDULE_MODES:
            raise ConfigError(f"unknown schedule mode {self.mode!r}", key="schedule_mode")
        if not 0.0 < self.decay_fraction < 1.0:
            raise ConfigError(f"decay_fraction must lie in (0, 1), got {self.decay_fraction}",
                              key="decay_fraction")
        if self.interval_episodes < 1:
            raise ConfigError("interval_episodes must be positive", key="interval_episodes")
        if self.patience < 1:
            raise ConfigError("patience must be positive", key="patience")
        if not 0.0 <= self.cutoff < 1.0:
            raise ConfigError("cutoff must lie in [0, 1)", key="cutoff")

    def k_after(self, decays: int) -> float:
        """Closed form ``(1 - fraction) ** decays`` with the cutoff applied."""
        k = (1.0 - self.decay_fraction) ** decays
        return 0.0 if k < self.cutoff else k

    def next_factor(self, k: float) -> float:
        """One decay step from an arbitrary ``k``."""
        k = k * (1.0 - self.decay_fraction)
        return 0.0 if k < self.cutoff else k

    @property
    def k(self) -> float:
        return self.k_after(self.decays)

    @property
    def next_k(self) -> float:
        return self.k if self.finished else self.k_after(self.decays + 1)


def advance_schedule(schedule: DecaySchedule, episode_index: int,
                     recent_returns: Sequence[float] = ()) -> tuple[bool, float]:
    """Decide whether ``k`` decays after episode ``episode_index`` (1-based)."""
    if schedule.finished:
        return False, 0.0
    schedule.since_decay += 1
    if schedule.mode == "interval":
        due = episode_index % schedule.interval_episodes == 0
    else:
        tail = list(recent_returns)[-schedule.patience:]
        due = (schedule.since_decay >= schedule.patience and len(tail) == schedule.patience
               and float(np.mean(tail)) >= schedule.target_score)
    if not due:
        return False, schedule.k
    schedule.decays += 1
    schedule.since_decay = 0
    k = schedule.k
    if k == 0.0:
        schedule.finished = True
    return True, k


@dataclass
class PioneerState:
    params: nn.NetworkParams
    next_k: float
    opt: nn.AdamState
    updates: int = 0
    converged: bool = False
    last_loss: float = float("nan")


def clone_from_learner(actor: nn.NetworkParams, next_k: float) -> PioneerState:
    params = actor.copy()
    return PioneerState(params, float(next_k), nn.adam_init(params))


def pioneer_gradient(pioneer: PioneerState, supervisor: Callable, batch: Batch):
    """Loss ``mean 0.5 * ||c - a||^2`` with ``c`` the next-k blend, and its gradient."""
    k = pioneer.next_k
    out, cache = nn.forward(pioneer.params, batch.s)
    if k > 0.0:
        c = k * supervisor(batch.s) + (1.0 - k) * out
    else:
        c = out
    diff = c - batch.a
    m = diff.shape[0]
    loss = float(0.5 * np.sum(diff * diff) / m)
    grads, _ = nn.backward(pioneer.params, cache, ((1.0 - k) / m) * diff)
    return loss, grads


def pioneer_update(pioneer: PioneerState, supervisor: Callable, batch: Optional[Batch],
                   learning_rate: float = 1e-4) -> Optional[float]:
    """One regression step on a pioneer-buffer batch; returns the pre-step loss."""
    if batch is None or len(batch) == 0:
        log.warning("pioneer buffer is empty; skipping pioneer update")
        return None
    loss, grads = pioneer_gradient(pioneer, supervisor, batch)
    nn.adam_step(pioneer.params, grads, pioneer.opt, learning_rate)
    pioneer.updates += 1
    pioneer.last_loss = loss
    return loss


def handoff(nets: AgentNets, pioneer: PioneerState, blend_state: BlendState,
            decayed: bool, reset_actor_target: bool = False) -> None:
    """Replace the learner with the pioneer and move to the pioneer's ``k``."""
    if not decayed:
        raise UsageError("handoff requires a decay event")
    nn.copy_into(nets.actor, pioneer.params)
    if reset_actor_target:
        nn.copy_into(nets.actor_target, nets.actor)
    blend_state.set_k(pioneer.next_k)
