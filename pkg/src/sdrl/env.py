"""Closed-form continuous-control tasks: pendulum swing-up, planar lander, 2-link reacher.

All three integrate with semi-implicit Euler (velocity first, then
position) and are deterministic given the reset seed and the action
sequence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UsageError

RUNNING, LANDED, CRASHED, TIMEOUT = "running", "landed", "crashed", "timeout"


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    act_dim: int
    act_low: np.ndarray
    act_high: np.ndarray
    max_steps: int
    success_return: float
    has_crash: bool = False

    @property
    def act_range(self) -> np.ndarray:
        return self.act_high - self.act_low


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminal: bool
    outcome: str = RUNNING


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.fmod(theta + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


class Env:
    spec: EnvSpec

    def __init__(self):
        self.steps = 0
        self.done = True

    def reset(self, seed=None) -> np.ndarray:
        raise NotImplementedError

    def step(self, action) -> StepResult:
        raise NotImplementedError

    def clip(self, action) -> np.ndarray:
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape != (self.spec.act_dim,):
            raise ConfigError(f"action must have {self.spec.act_dim} components, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise UsageError("non-finite action")
        return np.clip(a, self.spec.act_low, self.spec.act_high)

    def _begin_step(self, action) -> np.ndarray:
        if self.done:
            raise UsageError("step() called on a finished episode; call reset() first")
        a = self.clip(action)
        self.steps += 1
        return a


class Pendulum(Env):
    """Swing-up from hanging. Angle 0 is upright; observation (cos, sin, rate)."""

    g, m, l = 10.0, 1.0, 1.0
    dt = 0.05
    max_speed = 8.0
    max_torque = 2.0

    spec = EnvSpec("pendulum", 3, 1, np.array([-2.0]), np.array([2.0]), 200,
                   success_return=-372.487)

    def __init__(self):
        super().__init__()
        self.theta = math.pi
        self.theta_dot = 0.0

    def set_state(self, theta: float, theta_dot: float) -> np.ndarray:
        self.theta = wrap_angle(theta)
        self.theta_dot = float(np.clip(theta_dot, -self.max_speed, self.max_speed))
        self.steps = 0
        self.done = False
        return self.observe()

    def reset(self, seed=None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        theta = math.pi + rng.uniform(-0.05, 0.05)
        return self.set_state(theta, rng.uniform(-0.05, 0.05))

    def observe(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta), self.theta_dot])

    def step(self, action) -> StepResult:
        a = self._begin_step(action)
        u = float(a[0])
        th, thdot = self.theta, self.theta_dot
        reward = -(wrap_angle(th) ** 2 + 0.1 * thdot ** 2 + 0.001 * u ** 2)
        acc = 3.0 * self.g / (2.0 * self.l) * math.sin(th) + 3.0 / (self.m * self.l ** 2) * u
        thdot = min(max(thdot + acc * self.dt, -self.max_speed), self.max_speed)
        self.theta = wrap_angle(th + thdot * self.dt)
        self.theta_dot = thdot
        outcome = TIMEOUT if self.steps >= self.spec.max_steps else RUNNING
        self.done = outcome != RUNNING
        return StepResult(self.observe(), reward, self.done, outcome)


class Lander(Env):
    """Point-mass lander over a pad at the origin. Action (main in [0,1], lateral in [-1,1])."""

    dt = 0.05
    gravity = 1.0
    x_limit = 1.5
    pad_half_width = 0.1
    max_land_vx = 0.3
    max_land_vy = 0.5

    spec = EnvSpec("lander", 4, 2, np.array([0.0, -1.0]), np.array([1.0, 1.0]), 400,
                   success_return=93.453, has_crash=True)

    def __init__(self):
        super().__init__()
        self.x = self.y = self.vx = self.vy = 0.0

    def set_state(self, x, y, vx=0.0, vy=0.0) -> np.ndarray:
        self.x, self.y, self.vx, self.vy = float(x), float(y), float(vx), float(vy)
        self.steps = 0
        self.done = False
        return self.observe()

    def reset(self, seed=None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return self.set_state(rng.uniform(-0.3, 0.3), 1.0)

    def observe(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy])

    def step(self, action) -> StepResult:
        a = self._begin_step(action)
        main, lateral = float(a[0]), float(a[1])
        self.vx += 0.5 * lateral * self.dt
        self.vy += (2.0 * main - self.gravity) * self.dt
        self.x += self.vx * self.dt
        self.y += self.vy * self.dt
        x, y, vx, vy = self.x, self.y, self.vx, self.vy
        reward = (-0.1 * math.hypot(x, y) - 0.1 * math.hypot(vx, vy)
                  - 0.01 * main ** 2 - 0.003 * lateral ** 2)
        outcome = RUNNING
        if y <= 0.0:
            soft = (abs(x) <= self.pad_half_width and abs(vx) <= self.max_land_vx
                    and abs(vy) <= self.max_land_vy)
            outcome = LANDED if soft else CRASHED
            reward += 100.0 if soft else -100.0
        elif abs(x) > self.x_limit:
            outcome = CRASHED
            reward -= 100.0
        elif self.steps >= self.spec.max_steps:
            outcome = TIMEOUT
        self.done = outcome != RUNNING
        return StepResult(self.observe(), reward, self.done, outcome)


class Reacher(Env):
    """Planar 2R arm, unit-inertia decoupled joints with viscous damping.

    Observation: cos/sin of both joints, joint rates, target, tip - target.
    """

    link = 0.1
    dt = 0.02
    damping = 0.1
    target_radius = 0.2

    spec = EnvSpec("reacher", 10, 2, np.array([-1.0, -1.0]), np.array([1.0, 1.0]), 50,
                   success_return=-16.420)

    def __init__(self):
        super().__init__()
        self.q = np.zeros(2)
        self.qdot = np.zeros(2)
        self.target = np.zeros(2)

    def set_state(self, q, qdot, target) -> np.ndarray:
        self.q = np.array(q, dtype=np.float64)
        self.qdot = np.array(qdot, dtype=np.float64)
        self.target = np.array(target, dtype=np.float64)
        self.steps = 0
        self.done = False
        return self.observe()

    def reset(self, seed=None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        r = self.target_radius * math.sqrt(rng.uniform())
        phi = rng.uniform(-math.pi, math.pi)
        return self.set_state((0.0, 0.0), (0.0, 0.0), (r * math.cos(phi), r * math.sin(phi)))

    @classmethod
    def fingertip(cls, q) -> np.ndarray:
        q1, q2 = q[0], q[1]
        return np.array([cls.link * (math.cos(q1) + math.cos(q1 + q2)),
                         cls.link * (math.sin(q1) + math.sin(q1 + q2))])

    def observe(self) -> np.ndarray:
        tip = self.fingertip(self.q)
        return np.concatenate([
            [math.cos(self.q[0]), math.sin(self.q[0]), math.cos(self.q[1]), math.sin(self.q[1])],
            self.qdot, self.target, tip - self.target,
        ])

    def step(self, action) -> StepResult:
        a = self._begin_step(action)
        self.qdot = self.qdot + (a - self.damping * self.qdot) * self.dt
        self.q = self.q + self.qdot * self.dt
        dist = float(np.linalg.norm(self.fingertip(self.q) - self.target))
        reward = -dist - 0.01 * float(a @ a)
        outcome = TIMEOUT if self.steps >= self.spec.max_steps else RUNNING
        self.done = outcome != RUNNING
        return StepResult(self.observe(), reward, self.done, outcome)


ENVIRONMENTS = {"pendulum": Pendulum, "lander": Lander, "reacher": Reacher}


def make_env(name: str) -> Env:
    try:
        return ENVIRONMENTS[name]()
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}",
                          key="env") from None


def env_spec(name: str) -> EnvSpec:
    return make_env(name).spec


def classify_episode(total_return: float, final_outcome: str, spec: EnvSpec) -> str:
    """Safety label for a finished episode: 'success', 'crash' or 'other'."""
    if spec.has_crash:
        if final_outcome == LANDED:
            return "success"
        if final_outcome == CRASHED:
            return "crash"
        return "other"
    return "success" if total_return >= spec.success_return else "other"
