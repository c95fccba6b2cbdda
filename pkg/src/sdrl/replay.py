"""Replay storage: the main ring buffer, the per-episode staging list and
the return-gated pioneer buffer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, UsageError


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s2: np.ndarray
    terminal: bool
    episode: int = -1

    def is_finite(self) -> bool:
        return (math.isfinite(self.r) and bool(np.all(np.isfinite(self.s)))
                and bool(np.all(np.isfinite(self.a))) and bool(np.all(np.isfinite(self.s2))))


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    terminal: np.ndarray
    episode: np.ndarray

    def __len__(self) -> int:
        return self.s.shape[0]


def make_batch(transitions: Sequence[Transition]) -> Batch:
    return Batch(
        s=np.array([t.s for t in transitions], dtype=np.float64),
        a=np.array([t.a for t in transitions], dtype=np.float64),
        r=np.array([t.r for t in transitions], dtype=np.float64),
        s2=np.array([t.s2 for t in transitions], dtype=np.float64),
        terminal=np.array([t.terminal for t in transitions], dtype=bool),
        episode=np.array([t.episode for t in transitions], dtype=np.int64),
    )


class RingBuffer:
    """Fixed-capacity FIFO of transitions backed by preallocated arrays."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int,
                 act_low=None, act_high=None):
        if capacity < 1:
            raise ConfigError("buffer capacity must be positive", key="buffer_capacity")
        self.capacity = int(capacity)
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.act_low = None if act_low is None else np.asarray(act_low, dtype=np.float64)
        self.act_high = None if act_high is None else np.asarray(act_high, dtype=np.float64)
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros((capacity, act_dim))
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, obs_dim))
        self.terminal = np.zeros(capacity, dtype=bool)
        self.episode = np.zeros(capacity, dtype=np.int64)
        self.size = 0
        self.cursor = 0

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        if not t.is_finite():
            raise ValueError("transition contains non-finite values")
        a = np.asarray(t.a, dtype=np.float64)
        if self.act_low is not None and (np.any(a < self.act_low) or np.any(a > self.act_high)):
            raise ValueError("transition action lies outside the action bounds")
        i = self.cursor
        self.s[i] = t.s
        self.a[i] = a
        self.r[i] = t.r
        self.s2[i] = t.s2
        self.terminal[i] = t.terminal
        self.episode[i] = t.episode
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def extend(self, transitions: Iterable[Transition]) -> None:
        for t in transitions:
            self.push(t)

    def _ordered_indices(self) -> np.ndarray:
        """Storage indices from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.cursor) % self.capacity

    def batch_at(self, idx: np.ndarray) -> Batch:
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s2[idx],
                     self.terminal[idx], self.episode[idx])

    def contents(self) -> Batch:
        return self.batch_at(self._ordered_indices())

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        """``n`` uniform draws with replacement."""
        if self.size == 0:
            raise UsageError("cannot sample from an empty buffer")
        return self.batch_at(rng.integers(0, self.size, size=n))

    def clear(self) -> None:
        self.size = 0
        self.cursor = 0

    # checkpoint support: stored rows in oldest-to-newest order
    def state_dict(self) -> dict:
        b = self.contents()
        return {"capacity": self.capacity, "s": b.s, "a": b.a, "r": b.r, "s2": b.s2,
                "terminal": b.terminal.astype(np.float64),
                "episode": b.episode.astype(np.float64)}

    def load_state_dict(self, d: dict) -> None:
        n = len(d["r"])
        if n > self.capacity:
            raise ValueError("stored buffer larger than capacity")
        self.clear()
        self.s[:n] = np.asarray(d["s"]).reshape(n, self.obs_dim)
        self.a[:n] = np.asarray(d["a"]).reshape(n, self.act_dim)
        self.r[:n] = d["r"]
        self.s2[:n] = np.asarray(d["s2"]).reshape(n, self.obs_dim)
        self.terminal[:n] = np.asarray(d["terminal"]) != 0
        self.episode[:n] = np.asarray(d["episode"]).astype(np.int64)
        self.size = n
        self.cursor = n % self.capacity


@dataclass
class PioneerGate:
    """Admission threshold for the pioneer buffer; it only ever rises."""

    r_p: float = -math.inf
    percentile: float = 60.0
    window: int = 20
    promotions: list = field(default_factory=list)

    def admits(self, episode_return: float) -> bool:
        return episode_return >= self.r_p


def promote_episode(episode_buffer: list, pioneer_buffer: RingBuffer, episode_return: float,
                    gate: PioneerGate, episode: Optional[int] = None) -> bool:
    """Move the finished episode into the pioneer buffer if its return clears the gate.

    The staging list is emptied either way.
    """
    promoted = gate.admits(episode_return)
    if promoted:
        pioneer_buffer.extend(episode_buffer)
        gate.promotions.append((episode, float(episode_return), gate.r_p))
    episode_buffer.clear()
    return promoted


def raise_threshold(gate: PioneerGate, recent_returns: Sequence[float]) -> PioneerGate:
    if len(recent_returns) == 0:
        raise UsageError("raise_threshold needs at least one finished episode")
    tail = np.asarray(recent_returns[-gate.window:], dtype=np.float64)
    gate.r_p = max(gate.r_p, float(np.percentile(tail, gate.percentile)))
    return gate
