"""Run configuration: defaults, ``key = value`` file parsing and validation."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping, Optional

from .errors import ConfigError

ABLATIONS = ("full", "no_pioneer", "ddpg_only", "supervisor_only")
_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    env: str = "pendulum"
    supervisor: str = "analytic"          # "analytic" or a checkpoint path whose actor supervises
    supervisor_quality: str = "good"
    supervisor_gains: str = ""            # overrides, e.g. "kp:6,kd:1.5"
    ablation: str = "full"
    episodes: int = 300
    seed: int = 0
    gamma: float = 0.99
    tau: float = 0.001
    batch_size: int = 64
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    lr_pioneer: float = 1e-4
    hidden_sizes: str = "64,64"
    noise_sigma: float = 0.2              # fraction of half the action range
    noise_theta: float = 0.15
    noise_decay: float = 0.99
    schedule_mode: str = "interval"
    decay_fraction: float = 0.06
    interval_episodes: int = 4
    target_score: float = 0.0
    patience: int = 5
    cutoff: float = 0.01
    rp_percentile: float = 60.0
    rp_window: int = 20
    buffer_capacity: int = 100_000
    pioneer_capacity: int = 50_000
    pioneer_min_updates: int = 200
    pioneer_updates: int = 200            # pioneer steps per episode
    pioneer_batch_size: int = 64
    warmup_steps: int = 1000
    supervised_target: str = "supervisor"
    lambda_mode: str = "slaved"
    lambda_const: float = 1.0
    reset_actor_target: bool = False
    clone_per_period: bool = False
    eval_every: int = 4
    eval_episodes: int = 5
    eval_learner: bool = False

    def __post_init__(self):
        self.validate()

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(int(h) for h in self.hidden_sizes.split(",") if h.strip())

    @property
    def gain_overrides(self) -> dict[str, float]:
        out = {}
        for item in filter(None, (p.strip() for p in self.supervisor_gains.split(","))):
            name, sep, val = item.partition(":")
            if not sep:
                raise ConfigError(f"bad gain override {item!r}", key="supervisor_gains")
            try:
                out[name.strip()] = float(val)
            except ValueError:
                raise ConfigError(f"bad gain value in {item!r}", key="supervisor_gains") from None
        return out

    def validate(self) -> None:
        from .env import ENVIRONMENTS

        def need(ok: bool, key: str, msg: str):
            if not ok:
                raise ConfigError(f"{key}: {msg}", key=key)

        need(self.env in ENVIRONMENTS, "env", f"must be one of {sorted(ENVIRONMENTS)}")
        need(self.supervisor_quality in ("good", "bad"), "supervisor_quality", "must be good or bad")
        need(self.ablation in ABLATIONS, "ablation", f"must be one of {list(ABLATIONS)}")
        need(self.episodes >= 1, "episodes", "must be >= 1")
        need(0.0 <= self.gamma <= 1.0, "gamma", "must lie in [0, 1]")
        need(0.0 <= self.tau <= 1.0, "tau", "must lie in [0, 1]")
        for key in ("batch_size", "pioneer_batch_size", "buffer_capacity", "pioneer_capacity",
                    "interval_episodes", "patience", "rp_window"):
            need(getattr(self, key) >= 1, key, "must be >= 1")
        for key in ("lr_actor", "lr_critic", "lr_pioneer"):
            need(getattr(self, key) > 0.0, key, "must be positive")
        for key in ("noise_sigma", "noise_theta", "pioneer_min_updates", "pioneer_updates",
                    "warmup_steps", "eval_every", "eval_episodes", "lambda_const"):
            need(getattr(self, key) >= 0, key, "must be non-negative")
        need(0.0 < self.noise_decay <= 1.0, "noise_decay", "must lie in (0, 1]")
        need(self.schedule_mode in ("interval", "score_triggered"), "schedule_mode",
             "must be interval or score_triggered")
        need(0.0 < self.decay_fraction < 1.0, "decay_fraction", "must lie in (0, 1)")
        need(0.0 <= self.cutoff < 1.0, "cutoff", "must lie in [0, 1)")
        need(0.0 <= self.rp_percentile <= 100.0, "rp_percentile", "must lie in [0, 100]")
        need(self.supervised_target in ("supervisor", "executed"), "supervised_target",
             "must be supervisor or executed")
        need(self.lambda_mode in ("slaved", "constant"), "lambda_mode", "must be slaved or constant")
        try:
            hidden = self.hidden
        except ValueError:
            hidden = ()
        need(len(hidden) >= 1 and all(h > 0 for h in hidden), "hidden_sizes",
             "must be a comma-separated list of positive integers")
        for key in ("gamma", "tau", "lr_actor", "lr_critic", "target_score"):
            need(math.isfinite(getattr(self, key)), key, "must be finite")
        self.gain_overrides  # parse check

    def items(self) -> list[tuple[str, object]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


CONFIG_KEYS = tuple(f.name for f in fields(RunConfig))
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def coerce(key: str, raw) -> object:
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}", key=key)
    kind = _TYPES[key]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind == "bool":
            low = text.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(text)
        if kind == "int":
            try:
                return int(text)
            except ValueError:
                as_float = float(text)  # accept "1e5"
                if not as_float.is_integer():
                    raise
                return int(as_float)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind}", key=key) from None
    return text


def read_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'", key=None)
        key = key.strip()
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r} ({path}:{lineno})", key=key)
        values[key] = value.strip()
    return values


def parse_config(file_path: Optional[str] = None,
                 overrides: Optional[Mapping[str, object]] = None) -> RunConfig:
    """Defaults, then the file, then ``overrides`` (flags win)."""
    merged: dict[str, object] = {}
    if file_path:
        merged.update(read_config_file(file_path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}", key=key)
        merged[key] = value
    typed = {k: coerce(k, v) for k, v in merged.items()}
    return RunConfig(**typed)


def render_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in cfg.items())
