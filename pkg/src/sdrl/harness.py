"""The supervised training loop, evaluation rollouts and run logging."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import nn
from .agent import (AgentNets, BlendState, OUNoise, actor_update, combined_action,
                    critic_update, end_of_step_updates, make_agent_nets)
from .config import RunConfig
from .env import CRASHED, LANDED, classify_episode, make_env
from .errors import InvariantBreach, UpdateRejected
from .pioneer import (DecaySchedule, PioneerState, advance_schedule, clone_from_learner,
                      handoff, pioneer_update)
from .replay import PioneerGate, RingBuffer, Transition, promote_episode, raise_threshold
from .supervisors import ActorSupervisor, SupervisorPolicy

log = logging.getLogger(__name__)

STREAM_NAMES = ("init", "env", "noise", "sample", "eval")
_SEED_BOUND = 2 ** 63


def seed_streams(master_seed: int) -> dict[str, np.random.Generator]:
    """Five independent PCG64 streams spawned, in ``STREAM_NAMES`` order,
    from ``SeedSequence(master_seed)``."""
    children = np.random.SeedSequence(int(master_seed)).spawn(len(STREAM_NAMES))
    return {name: np.random.Generator(np.random.PCG64(ss))
            for name, ss in zip(STREAM_NAMES, children)}


@dataclass
class EvalStats:
    mean_return: float
    success_count: int
    crash_count: int
    returns: list = field(default_factory=list)


def evaluate(actor: nn.NetworkParams, supervisor: Optional[Callable], k: float, env_name: str,
             n_episodes: int, seed) -> EvalStats:
    """Noise-free rollouts of the blend at ``k``; the supervisor is not queried at ``k == 0``."""
    if n_episodes <= 0:
        return EvalStats(float("nan"), 0, 0, [])
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    env = make_env(env_name)
    spec = env.spec
    returns, success, crash = [], 0, 0
    for _ in range(n_episodes):
        obs = env.reset(int(rng.integers(_SEED_BOUND)))
        total = 0.0
        while True:
            a = nn.predict(actor, obs)[0]
            if not np.all(np.isfinite(a)):
                raise InvariantBreach("actor produced a non-finite action during evaluation")
            if k > 0.0:
                a = k * supervisor(obs) + (1.0 - k) * a
            res = env.step(a)
            total += res.reward
            obs = res.observation
            if res.terminal:
                break
        label = classify_episode(total, res.outcome, spec)
        success += label == "success"
        crash += label == "crash"
        returns.append(total)
    return EvalStats(float(np.mean(returns)), success, crash, returns)


def outcome_label(total: float, outcome: str, spec) -> str:
    """CSV outcome: raw terminal tag where the task has one, else success/other."""
    if spec.has_crash:
        return outcome
    return classify_episode(total, outcome, spec)


class TrainingAborted(RuntimeError):
    def __init__(self, message: str, row: dict):
        super().__init__(message)
        self.row = row


def build_supervisor(cfg: RunConfig):
    if cfg.supervisor == "analytic":
        return SupervisorPolicy(cfg.env, cfg.supervisor_quality, cfg.gain_overrides)
    from .checkpoint import load_checkpoint

    ckpt = load_checkpoint(cfg.supervisor)
    return ActorSupervisor(ckpt.networks["actor"], cfg.env)


class Trainer:
    """Owns every piece of mutable training state; advances one episode at a time."""

    def __init__(self, cfg: RunConfig, supervisor=None):
        self.cfg = cfg
        self.env = make_env(cfg.env)
        self.spec = self.env.spec
        self.supervisor = supervisor if supervisor is not None else build_supervisor(cfg)
        self.streams = seed_streams(cfg.seed)
        spec = self.spec
        self.nets: AgentNets = make_agent_nets(
            spec.obs_dim, spec.act_dim, spec.act_low, spec.act_high, self.streams["init"],
            hidden=cfg.hidden, gamma=cfg.gamma, tau=cfg.tau,
            lr_actor=cfg.lr_actor, lr_critic=cfg.lr_critic)
        k0 = 0.0 if cfg.ablation == "ddpg_only" else 1.0
        self.blend = BlendState(k0, lambda_mode=cfg.lambda_mode, lambda_const=cfg.lambda_const)
        self.noise = OUNoise(spec.act_dim, cfg.noise_sigma * spec.act_range / 2.0,
                             cfg.noise_theta, cfg.noise_decay)
        self.schedule = DecaySchedule(cfg.schedule_mode, cfg.decay_fraction,
                                      cfg.interval_episodes, cfg.target_score, cfg.patience,
                                      cfg.cutoff)
        if cfg.ablation in ("ddpg_only", "supervisor_only"):
            self.schedule.finished = True
        self.replay = RingBuffer(cfg.buffer_capacity, spec.obs_dim, spec.act_dim,
                                 spec.act_low, spec.act_high)
        self.pioneer_buffer = RingBuffer(cfg.pioneer_capacity, spec.obs_dim, spec.act_dim,
                                         spec.act_low, spec.act_high)
        self.gate = PioneerGate(-math.inf, cfg.rp_percentile, cfg.rp_window)
        self.pioneer: Optional[PioneerState] = None
        self.returns: list[float] = []
        self.episode = 0
        self.total_steps = 0
        self.rejected_updates = 0

    @property
    def learning(self) -> bool:
        return self.cfg.ablation != "supervisor_only"

    def _act(self, obs) -> np.ndarray:
        spec = self.spec
        if not self.learning:
            return np.clip(self.supervisor(obs), spec.act_low, spec.act_high)
        n = self.noise.sample(self.streams["noise"])
        return combined_action(self.nets, self.supervisor, self.blend, obs, n,
                               spec.act_low, spec.act_high)

    def _learn_step(self, critic_losses: list, grad_norms: list) -> None:
        cfg = self.cfg
        batch = self.replay.sample(cfg.batch_size, self.streams["sample"])
        try:
            critic_losses.append(critic_update(batch, self.nets))
            grad_norms.append(actor_update(batch, self.nets, self.supervisor, self.blend,
                                           cfg.supervised_target))
        except UpdateRejected as exc:
            self.rejected_updates += 1
            log.warning("update rejected at step %d: %s", self.total_steps, exc)
        end_of_step_updates(self.nets, cfg.tau)
        self.nets.updates += 1

    def _train_pioneer(self) -> Optional[float]:
        cfg = self.cfg
        if cfg.ablation != "full" or self.schedule.finished:
            return None
        if self.pioneer is None or not cfg.clone_per_period:
            self.pioneer = clone_from_learner(self.nets.actor, self.schedule.next_k)
        if len(self.pioneer_buffer) == 0:
            log.warning("pioneer buffer empty after episode %d", self.episode)
            return None
        losses = []
        for _ in range(cfg.pioneer_updates):
            batch = self.pioneer_buffer.sample(cfg.pioneer_batch_size, self.streams["sample"])
            try:
                losses.append(pioneer_update(self.pioneer, self.supervisor, batch,
                                             cfg.lr_pioneer))
            except UpdateRejected as exc:
                self.rejected_updates += 1
                log.warning("pioneer update rejected: %s", exc)
        return float(np.mean(losses)) if losses else None

    def run_episode(self) -> dict:
        cfg, spec = self.cfg, self.spec
        e = self.episode + 1
        obs = self.env.reset(int(self.streams["env"].integers(_SEED_BOUND)))
        self.noise.start_episode(e - 1)
        staged: list[Transition] = []
        total, steps = 0.0, 0
        critic_losses: list[float] = []
        grad_norms: list[float] = []
        k_used = self.blend.k
        try:
            while True:
                a = self._act(obs)
                res = self.env.step(a)
                t = Transition(obs, a, res.reward, res.observation,
                               res.outcome in (LANDED, CRASHED), e)
                if self.learning:
                    self.replay.push(t)
                staged.append(t)
                total += res.reward
                steps += 1
                self.total_steps += 1
                if self.learning and len(self.replay) >= max(cfg.warmup_steps, 1):
                    self._learn_step(critic_losses, grad_norms)
                obs = res.observation
                if res.terminal:
                    break
        except InvariantBreach as exc:
            row = self._row(e, steps, total, "running", critic_losses, grad_norms, None, False)
            raise TrainingAborted(str(exc), row) from exc

        self.returns.append(total)
        promote_episode(staged, self.pioneer_buffer, total, self.gate, e)
        pioneer_loss = self._train_pioneer()

        decayed, new_k = advance_schedule(self.schedule, e, self.returns)
        handed_off = False
        if decayed:
            p = self.pioneer
            if cfg.ablation == "full" and p is not None and p.updates >= cfg.pioneer_min_updates:
                if p.next_k != new_k:
                    raise TrainingAborted("pioneer trained for the wrong combination factor",
                                          self._row(e, steps, total, "running", critic_losses,
                                                    grad_norms, pioneer_loss, False))
                handoff(self.nets, p, self.blend, True, cfg.reset_actor_target)
                handed_off = True
                if cfg.clone_per_period:
                    self.pioneer = None
            else:
                if cfg.ablation == "full":
                    log.warning("episode %d: decay without a trained pioneer", e)
                self.blend.set_k(new_k)
        raise_threshold(self.gate, self.returns)

        row = self._row(e, steps, total, outcome_label(total, res.outcome, spec),
                        critic_losses, grad_norms, pioneer_loss, handed_off)
        row["k_episode"] = k_used
        if cfg.eval_every > 0 and e % cfg.eval_every == 0 and cfg.eval_episodes > 0:
            stats = self.evaluate_now()
            row.update(eval_mean_return=stats.mean_return, eval_success=stats.success_count,
                       eval_crash=stats.crash_count)
            if cfg.eval_learner:
                raw = evaluate(self.nets.actor, None, 0.0, cfg.env, cfg.eval_episodes,
                               int(self.streams["eval"].integers(_SEED_BOUND)))
                row["eval_learner_return"] = raw.mean_return
        self.episode = e
        return row

    def evaluate_now(self, n_episodes: Optional[int] = None) -> EvalStats:
        n = self.cfg.eval_episodes if n_episodes is None else n_episodes
        seed = int(self.streams["eval"].integers(_SEED_BOUND))
        return evaluate(self.nets.actor, self.supervisor, self.blend.k, self.cfg.env, n, seed)

    # checkpointing --------------------------------------------------------

    def to_checkpoint(self) -> "Checkpoint":
        from .checkpoint import Checkpoint, rng_state_text
        from .config import format_value

        ck = Checkpoint()
        ck.meta.update(env=self.cfg.env, episode=str(self.episode),
                       total_steps=str(self.total_steps),
                       rejected_updates=str(self.rejected_updates),
                       has_pioneer="1" if self.pioneer is not None else "0")
        ck.config.update({k: format_value(v) for k, v in self.cfg.items()})
        n = self.nets
        for name in ("actor", "critic", "actor_target", "critic_target"):
            ck.put_network(name, getattr(n, name))
        ck.scalars.update({
            "k": repr(self.blend.k), "lambda": repr(self.blend.lam),
            "supervision_active": str(int(self.blend.supervision_active)),
            "r_p": repr(self.gate.r_p),
            "schedule.decays": str(self.schedule.decays),
            "schedule.since_decay": str(self.schedule.since_decay),
            "schedule.finished": str(int(self.schedule.finished)),
            "noise.episode": str(self.noise.episode), "noise.t": str(self.noise.t),
            "actor_opt.step": str(n.actor_opt.step), "critic_opt.step": str(n.critic_opt.step),
            "nets.updates": str(n.updates),
        })
        ck.arrays["actor_opt.m"], ck.arrays["actor_opt.v"] = n.actor_opt.m, n.actor_opt.v
        ck.arrays["critic_opt.m"], ck.arrays["critic_opt.v"] = n.critic_opt.m, n.critic_opt.v
        ck.arrays["noise.x"] = self.noise.x
        if self.pioneer is not None:
            p = self.pioneer
            ck.put_network("pioneer", p.params)
            ck.scalars.update({"pioneer.next_k": repr(p.next_k),
                               "pioneer.updates": str(p.updates),
                               "pioneer.opt.step": str(p.opt.step),
                               "pioneer.last_loss": repr(p.last_loss)})
            ck.arrays["pioneer.opt.m"], ck.arrays["pioneer.opt.v"] = p.opt.m, p.opt.v
        ck.arrays["returns"] = np.asarray(self.returns, dtype=np.float64)
        ck.arrays["gate.promotions"] = np.asarray(
            [(ep, ret, rp) for ep, ret, rp in self.gate.promotions],
            dtype=np.float64).reshape(-1, 3)
        for prefix, buf in (("replay", self.replay), ("pioneer_buffer", self.pioneer_buffer)):
            for key, arr in buf.state_dict().items():
                if key != "capacity":
                    ck.arrays[f"{prefix}.{key}"] = arr
        for name, gen in self.streams.items():
            ck.rng[name] = rng_state_text(gen)
        return ck

    @classmethod
    def from_checkpoint(cls, ck: "Checkpoint", cfg: Optional[RunConfig] = None,
                        supervisor=None) -> "Trainer":
        """Rebuild a trainer; ``cfg`` may only differ from the stored config in run length."""
        from .checkpoint import rng_from_text
        from .config import parse_config
        from .errors import CheckpointError

        try:
            stored = parse_config(None, ck.config)
            if cfg is None:
                cfg = stored
            tr = cls(cfg, supervisor)
            n = tr.nets
            for name in ("actor", "critic", "actor_target", "critic_target"):
                net = ck.network(name)
                if not net.same_shape(getattr(n, name)):
                    raise CheckpointError(f"network {name} has layer sizes {net.layer_sizes}, "
                                          f"expected {getattr(n, name).layer_sizes}")
                nn.copy_into(getattr(n, name), net)
            sc = ck.scalars
            tr.episode = ck.episode
            tr.total_steps = int(ck.meta["total_steps"])
            tr.rejected_updates = int(ck.meta["rejected_updates"])
            tr.blend.supervision_active = sc["supervision_active"] == "1"
            tr.blend.k = float(sc["k"])
            tr.blend.lam = float(sc["lambda"])
            tr.gate.r_p = float(sc["r_p"])
            tr.schedule.decays = int(sc["schedule.decays"])
            tr.schedule.since_decay = int(sc["schedule.since_decay"])
            tr.schedule.finished = sc["schedule.finished"] == "1"
            tr.noise.episode, tr.noise.t = int(sc["noise.episode"]), int(sc["noise.t"])
            tr.noise.x = ck.arrays["noise.x"].astype(np.float64).reshape(-1).copy()
            n.updates = int(sc["nets.updates"])
            for opt_name in ("actor_opt", "critic_opt"):
                opt = getattr(n, opt_name)
                opt.step = int(sc[f"{opt_name}.step"])
                opt.m[...] = ck.arrays[f"{opt_name}.m"]
                opt.v[...] = ck.arrays[f"{opt_name}.v"]
            if ck.meta.get("has_pioneer") == "1":
                p = clone_from_learner(ck.network("pioneer"), float(sc["pioneer.next_k"]))
                p.updates = int(sc["pioneer.updates"])
                p.last_loss = float(sc["pioneer.last_loss"])
                p.opt.step = int(sc["pioneer.opt.step"])
                p.opt.m[...] = ck.arrays["pioneer.opt.m"]
                p.opt.v[...] = ck.arrays["pioneer.opt.v"]
                tr.pioneer = p
            tr.returns = [float(r) for r in ck.arrays["returns"].ravel()]
            tr.gate.promotions = [(int(e), float(r), float(rp))
                                  for e, r, rp in ck.arrays["gate.promotions"].reshape(-1, 3)]
            for prefix, buf in (("replay", tr.replay), ("pioneer_buffer", tr.pioneer_buffer)):
                buf.load_state_dict({key: ck.arrays[f"{prefix}.{key}"]
                                     for key in ("s", "a", "r", "s2", "terminal", "episode")})
            for name in STREAM_NAMES:
                tr.streams[name] = rng_from_text(ck.rng[name])
        except KeyError as exc:
            raise CheckpointError(f"checkpoint is missing entry {exc}") from None
        except ValueError as exc:
            if isinstance(exc, CheckpointError):
                raise
            raise CheckpointError(f"checkpoint has an inconsistent entry: {exc}") from None
        return tr

    def _row(self, e, steps, total, outcome, critic_losses, grad_norms, pioneer_loss,
             handed_off) -> dict:
        return {
            "episode": e,
            "steps": steps,
            "train_return": total,
            "k": self.blend.k,
            "lambda": self.blend.lam,
            "r_p": self.gate.r_p,
            "outcome": outcome,
            "critic_loss_mean": float(np.mean(critic_losses)) if critic_losses else None,
            "actor_grad_norm": float(np.mean(grad_norms)) if grad_norms else None,
            "pioneer_loss_mean": pioneer_loss,
            "handoff": int(handed_off),
            "eval_mean_return": None,
            "eval_success": None,
            "eval_crash": None,
        }


@dataclass
class RunLog:
    rows: list = field(default_factory=list)
    trainer: Optional["Trainer"] = None

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    @property
    def eval_rows(self) -> list:
        return [r for r in self.rows if r.get("eval_mean_return") is not None]


def train(cfg: RunConfig, supervisor=None, on_row: Optional[Callable[[dict], None]] = None,
          trainer: Optional[Trainer] = None) -> RunLog:
    """Run ``cfg.episodes`` episodes (or continue ``trainer`` up to that count)."""
    trainer = trainer if trainer is not None else Trainer(cfg, supervisor)
    runlog = RunLog(trainer=trainer)
    while trainer.episode < cfg.episodes:
        row = trainer.run_episode()
        runlog.rows.append(row)
        if on_row is not None:
            on_row(row)
    return runlog
