"""Hand-written controllers used as the fixed supervisor policy.

Each controller has a "good" gain preset and a degraded "bad" one. Every
function accepts a single observation or a batch (rows) and returns
actions already clipped to the environment bounds.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError

PENDULUM_GOOD = {"kp": 8.0, "kd": 2.0, "ke": 1.2, "e_grav": 15.0, "catch_angle": 0.3, "catch_rate": 1.0}
LANDER_GOOD = {"kp_y": 0.4, "kd_y": 0.8, "kp_x": 1.2, "kd_x": 1.6, "lateral_bias": 0.0}
REACHER_GOOD = {"kp": 5.0, "kd": 0.5}

# Only the feedback gains degrade in the bad presets; the catch region stays put.
_PENDULUM_SCALED = ("kp", "kd", "ke")
_LANDER_SCALED = ("kp_y", "kd_y", "kp_x", "kd_x")


def _scaled(gains: Mapping[str, float], keys, factor: float) -> dict:
    return {k: (v * factor if k in keys else v) for k, v in gains.items()}


PRESETS: dict[str, dict[str, dict[str, float]]] = {
    "pendulum": {"good": dict(PENDULUM_GOOD),
                 "bad": _scaled(PENDULUM_GOOD, _PENDULUM_SCALED, 0.25)},
    "lander": {"good": dict(LANDER_GOOD),
               "bad": {**_scaled(LANDER_GOOD, _LANDER_SCALED, 0.3), "lateral_bias": 0.2}},
    "reacher": {"good": dict(REACHER_GOOD),
                "bad": _scaled(REACHER_GOOD, ("kp", "kd"), 0.25)},
}


def _rows(obs) -> tuple[np.ndarray, bool]:
    o = np.asarray(obs, dtype=np.float64)
    return (o[None, :], True) if o.ndim == 1 else (o, False)


def pendulum_supervisor(obs, gains: Mapping[str, float] = PENDULUM_GOOD) -> np.ndarray:
    """PD catch near upright, energy pumping elsewhere."""
    o, single = _rows(obs)
    cos_t, sin_t, rate = o[:, 0], o[:, 1], o[:, 2]
    theta = np.arctan2(sin_t, cos_t)
    energy = 0.5 * rate ** 2 + gains["e_grav"] * (cos_t - 1.0)
    pump = gains["ke"] * (0.0 - energy) * np.sign(rate)
    pd = -gains["kp"] * theta - gains["kd"] * rate
    near = (np.abs(theta) < gains["catch_angle"]) & (np.abs(rate) < gains["catch_rate"])
    u = np.clip(np.where(near, pd, pump), -2.0, 2.0)[:, None]
    return u[0] if single else u


def lander_supervisor(obs, gains: Mapping[str, float] = LANDER_GOOD) -> np.ndarray:
    """Gravity-balancing thrust with PD on height and lateral position."""
    o, single = _rows(obs)
    x, y, vx, vy = o[:, 0], o[:, 1], o[:, 2], o[:, 3]
    main = np.clip(0.5 - gains["kp_y"] * y - gains["kd_y"] * vy, 0.0, 1.0)
    lateral = np.clip(-gains["kp_x"] * x - gains["kd_x"] * vx + gains.get("lateral_bias", 0.0),
                      -1.0, 1.0)
    u = np.stack([main, lateral], axis=1)
    return u[0] if single else u


def reacher_supervisor(obs, gains: Mapping[str, float] = REACHER_GOOD) -> np.ndarray:
    """Jacobian-transpose task-space PD."""
    o, single = _rows(obs)
    c1, s1, c2, s2 = o[:, 0], o[:, 1], o[:, 2], o[:, 3]
    qdot = o[:, 4:6]
    err = -o[:, 8:10]  # target - tip
    l = 0.1
    c12 = c1 * c2 - s1 * s2
    s12 = s1 * c2 + c1 * s2
    # J = [[-l s1 - l s12, -l s12], [l c1 + l c12, l c12]]
    j11, j12 = -l * s1 - l * s12, -l * s12
    j21, j22 = l * c1 + l * c12, l * c12
    fx, fy = gains["kp"] * err[:, 0], gains["kp"] * err[:, 1]
    tau = np.stack([j11 * fx + j21 * fy, j12 * fx + j22 * fy], axis=1) - gains["kd"] * qdot
    u = np.clip(tau, -1.0, 1.0)
    return u[0] if single else u


CONTROLLERS: dict[str, Callable] = {
    "pendulum": pendulum_supervisor,
    "lander": lander_supervisor,
    "reacher": reacher_supervisor,
}


@dataclass
class SupervisorPolicy:
    env_name: str
    quality: str = "good"
    gains: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.env_name not in CONTROLLERS:
            raise ConfigError(f"no supervisor for environment {self.env_name!r}", key="env")
        if self.quality not in PRESETS[self.env_name]:
            raise ConfigError(f"unknown supervisor quality {self.quality!r}",
                              key="supervisor_quality")
        merged = dict(PRESETS[self.env_name][self.quality])
        for k, v in self.gains.items():
            if k not in merged:
                raise ConfigError(f"unknown gain {k!r} for {self.env_name} supervisor",
                                  key="supervisor_gains")
            merged[k] = float(v)
        self.gains = merged
        self.calls = 0

    def __call__(self, obs) -> np.ndarray:
        self.calls += 1
        return CONTROLLERS[self.env_name](obs, self.gains)


class ActorSupervisor:
    """Wraps a trained actor network so it can supervise a new learner."""

    def __init__(self, params, env_name: str):
        from .nn import predict

        self._predict = predict
        self.params = params
        self.env_name = env_name
        self.quality = "checkpoint"
        self.calls = 0

    def __call__(self, obs) -> np.ndarray:
        self.calls += 1
        o = np.asarray(obs, dtype=np.float64)
        out = self._predict(self.params, o)
        return out[0] if o.ndim == 1 else out
