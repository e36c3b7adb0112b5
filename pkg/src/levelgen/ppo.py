"""PPO with generalized advantage estimation over batched rollouts.

Single-process reference implementation: given a seed, training is fully
deterministic (numpy env streams, one torch sampling generator, fixed
thread count), and a checkpoint carries enough state (model, optimizer
moments, both RNGs, and the entire environment batch) to resume a run
bit-for-bit.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np
import torch

from .env import BatchEnv, EnvConfig
from .nets import (
    ArchConfig,
    Checkpoint,
    ConvPolicy,
    default_arch,
    init_policy,
    load_checkpoint,
    save_checkpoint,
)

LOG_COLUMNS = (
    "update",
    "timestep",
    "episodes",
    "mean_ep_reward",
    "policy_loss",
    "value_loss",
    "entropy",
    "approx_kl",
    "clip_frac",
)


class TrainingDiverged(RuntimeError):
    """Raised when an update produces a non-finite loss."""


@dataclass(frozen=True)
class PpoConfig:
    n_envs: int = 16
    rollout_len: int = 128
    total_timesteps: int = 200_000
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    minibatches: int = 4
    lr: float = 2.5e-4
    vf_coef: float = 0.5
    ent_coef: float = 0.01
    max_grad_norm: float = 0.5
    seed: int = 0
    checkpoint_interval: int = 0  # updates between extra checkpoints; 0 = final only
    torch_threads: int = 1

    def __post_init__(self) -> None:
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must be in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.n_envs < 1 or self.rollout_len < 1 or self.total_timesteps < 0:
            raise ValueError("bad rollout dimensions")
        if self.epochs < 1 or self.minibatches < 1:
            raise ValueError("bad update schedule")
        if (self.n_envs * self.rollout_len) % self.minibatches != 0:
            raise ValueError("n_envs * rollout_len must divide evenly into minibatches")

    @property
    def batch_size(self) -> int:
        return self.n_envs * self.rollout_len

    @property
    def n_updates(self) -> int:
        return math.ceil(self.total_timesteps / self.batch_size)


@dataclass
class RolloutBatch:
    obs: np.ndarray       # [T, B, C, O, O] float32
    actions: np.ndarray   # [T, B] int64
    logprobs: np.ndarray  # [T, B] float32
    rewards: np.ndarray   # [T, B] float64
    values: np.ndarray    # [T, B] float32
    dones: np.ndarray     # [T, B] bool


def collect_rollout(
    model: ConvPolicy,
    env: BatchEnv,
    length: int,
    sampler: torch.Generator,
    obs: np.ndarray,
) -> tuple[RolloutBatch, np.ndarray, list[float]]:
    """Step the batch ``length`` times sampling from the policy.

    Returns the batch, the observation after the last step (for value
    bootstrapping), and the rewards of every episode that finished.
    """
    b = env.n_envs
    shape = env.observation_shape
    out_obs = np.empty((length, b, *shape), dtype=np.float32)
    out_actions = np.empty((length, b), dtype=np.int64)
    out_logprobs = np.empty((length, b), dtype=np.float32)
    out_rewards = np.empty((length, b), dtype=np.float64)
    out_values = np.empty((length, b), dtype=np.float32)
    out_dones = np.empty((length, b), dtype=bool)
    finished: list[float] = []

    with torch.no_grad():
        for t in range(length):
            obs_t = torch.from_numpy(obs)
            logits, value = model(obs_t)
            probs = torch.softmax(logits, dim=-1)
            actions = torch.multinomial(probs, 1, generator=sampler).squeeze(1)
            logprobs = torch.log_softmax(logits, dim=-1).gather(1, actions[:, None]).squeeze(1)

            out_obs[t] = obs
            out_actions[t] = actions.numpy()
            out_logprobs[t] = logprobs.numpy()
            out_values[t] = value.numpy()

            obs, reward, done, info = env.step(out_actions[t])
            out_rewards[t] = reward
            out_dones[t] = done
            if done.any():
                finished.extend(info["episode_reward"][done].tolist())

    batch = RolloutBatch(out_obs, out_actions, out_logprobs, out_rewards, out_values, out_dones)
    return batch, obs, finished


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    bootstrap_value: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """delta_t = r_t + gamma*v_{t+1}*(1-done_t) - v_t;
    A_t = delta_t + gamma*lam*(1-done_t)*A_{t+1}; returns = A + v."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    t_len = rewards.shape[0]
    adv = np.zeros_like(rewards)
    last = np.zeros(rewards.shape[1], dtype=np.float64)
    for t in reversed(range(t_len)):
        nonterm = 1.0 - dones[t]
        v_next = bootstrap_value if t == t_len - 1 else values[t + 1]
        delta = rewards[t] + gamma * v_next * nonterm - values[t]
        last = delta + gamma * lam * nonterm * last
        adv[t] = last
    return adv, adv + values


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Zero-mean unit-std normalization across the whole update batch."""
    flat = advantages.astype(np.float64).reshape(-1)
    return (flat - flat.mean()) / (flat.std() + 1e-8)


def ppo_update(
    model: ConvPolicy,
    optimizer: torch.optim.Optimizer,
    batch: RolloutBatch,
    advantages: np.ndarray,
    returns: np.ndarray,
    cfg: PpoConfig,
    sampler: torch.Generator,
) -> dict[str, float]:
    """Clipped-surrogate epochs over shuffled minibatches. Advantages are
    normalized once across the whole update (zero mean, unit std)."""
    n = cfg.batch_size
    obs_shape = batch.obs.shape[2:]
    obs = torch.from_numpy(batch.obs.reshape(n, *obs_shape))
    actions = torch.from_numpy(batch.actions.reshape(n))
    old_logp = torch.from_numpy(batch.logprobs.reshape(n))
    adv = torch.from_numpy(normalize_advantages(advantages).astype(np.float32))
    ret = torch.from_numpy(returns.reshape(n).astype(np.float32))

    mb_size = n // cfg.minibatches
    stats = {k: 0.0 for k in ("policy_loss", "value_loss", "entropy", "approx_kl", "clip_frac")}
    passes = 0
    for _ in range(cfg.epochs):
        perm = torch.randperm(n, generator=sampler)
        for start in range(0, n, mb_size):
            idx = perm[start : start + mb_size]
            logits, v = model(obs[idx])
            logp_all = torch.log_softmax(logits, dim=-1)
            new_logp = logp_all.gather(1, actions[idx][:, None]).squeeze(1)
            logratio = new_logp - old_logp[idx]
            ratio = logratio.exp()

            mb_adv = adv[idx]
            unclipped = -mb_adv * ratio
            clipped = -mb_adv * torch.clamp(ratio, 1 - cfg.clip_eps, 1 + cfg.clip_eps)
            policy_loss = torch.max(unclipped, clipped).mean()
            value_loss = 0.5 * (v - ret[idx]).pow(2).mean()
            entropy = -(logp_all.exp() * logp_all).sum(-1).mean()
            loss = policy_loss + cfg.vf_coef * value_loss - cfg.ent_coef * entropy
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss (policy {policy_loss.item()!r}, "
                    f"value {value_loss.item()!r}, entropy {entropy.item()!r})"
                )

            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.max_grad_norm)
            optimizer.step()

            with torch.no_grad():
                stats["policy_loss"] += float(policy_loss)
                stats["value_loss"] += float(value_loss)
                stats["entropy"] += float(entropy)
                stats["approx_kl"] += float((ratio - 1 - logratio).mean())
                stats["clip_frac"] += float(((ratio - 1).abs() > cfg.clip_eps).float().mean())
            passes += 1
    return {k: v / passes for k, v in stats.items()}


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    updates: int
    timesteps: int
    recent_rewards: list[float]
    model: ConvPolicy = field(repr=False)

    @property
    def mean_recent_reward(self) -> float:
        return float(np.mean(self.recent_rewards)) if self.recent_rewards else float("nan")


def train(
    env_config: EnvConfig,
    ppo_config: PpoConfig,
    arch: ArchConfig | None = None,
    out_dir: str | Path = ".",
    resume_from: str | Path | None = None,
    log_fn: Callable[[str], None] | None = None,
) -> TrainResult:
    """Run PPO to ``total_timesteps``, writing ``metrics.csv`` and
    ``checkpoint.npz`` into ``out_dir``. ``resume_from`` continues an
    interrupted run exactly where its checkpoint stopped: the checkpoint is
    authoritative for the environment and every training hyperparameter, and
    from the passed configs only ``total_timesteps`` (the new horizon) and
    ``torch_threads`` are honored."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = ppo_config
    ck: Checkpoint | None = None
    if resume_from is not None:
        ck = load_checkpoint(resume_from)
        env_config, cfg = resume_configs(ck)
        cfg = replace(
            cfg,
            total_timesteps=ppo_config.total_timesteps,
            torch_threads=ppo_config.torch_threads,
        )
    torch.set_num_threads(max(1, cfg.torch_threads))
    env_config.check_obs_invariant()

    env = BatchEnv(env_config, cfg.n_envs, seed=cfg.seed + 1)
    sampler = torch.Generator()
    recent: list[float] = []
    start_update = 0

    if ck is None:
        in_channels = env_config.observation_channels()
        arch = arch or default_arch(env_config.obs_size, in_channels, env_config.n_actions)
        if arch.obs_size != env_config.obs_size or arch.in_channels != in_channels:
            raise ValueError("architecture does not match the observation layout")
        model = init_policy(arch, cfg.seed)
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr, eps=1e-5)
        sampler.manual_seed(cfg.seed + 2)
        obs = env.reset()
    else:
        model = ck.build_model()
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr, eps=1e-5)
        _load_trainer_state(ck, model, optimizer, env, sampler)
        recent = list(ck.meta["trainer"]["recent"])
        start_update = int(ck.meta["trainer"]["update"])
        obs = env.observe()

    log_path = out_dir / "metrics.csv"
    ck_path = out_dir / "checkpoint.npz"
    mode = "a" if resume_from is not None and log_path.exists() else "w"
    with open(log_path, mode, newline="") as logf:
        writer = csv.writer(logf)
        if mode == "w":
            writer.writerow(LOG_COLUMNS)

        for update in range(start_update, cfg.n_updates):
            t0 = time.perf_counter()
            batch, obs, finished = collect_rollout(model, env, cfg.rollout_len, sampler, obs)
            recent.extend(finished)
            del recent[:-100]
            with torch.no_grad():
                _, bootstrap = model(torch.from_numpy(obs))
            adv, ret = gae(
                batch.rewards, batch.values, batch.dones,
                bootstrap.numpy().astype(np.float64),
                cfg.gamma, cfg.gae_lambda,
            )
            stats = ppo_update(model, optimizer, batch, adv, ret, cfg, sampler)

            timestep = (update + 1) * cfg.batch_size
            mean_r = float(np.mean(recent)) if recent else float("nan")
            writer.writerow(
                [update + 1, timestep, len(recent), f"{mean_r:.6f}"]
                + [f"{stats[k]:.6f}" for k in LOG_COLUMNS[4:]]
            )
            logf.flush()
            if log_fn:
                sps = cfg.batch_size / (time.perf_counter() - t0)
                log_fn(
                    f"update {update + 1}/{cfg.n_updates} step {timestep} "
                    f"reward {mean_r:.3f} kl {stats['approx_kl']:.4f} sps {sps:.0f}"
                )
            if cfg.checkpoint_interval and (update + 1) % cfg.checkpoint_interval == 0:
                _save_full(
                    out_dir / f"checkpoint_u{update + 1:06d}.npz",
                    model, optimizer, env, sampler, env_config, cfg, update + 1, timestep, recent,
                )

    _save_full(
        ck_path, model, optimizer, env, sampler, env_config, cfg,
        cfg.n_updates, cfg.n_updates * cfg.batch_size, recent,
    )
    return TrainResult(
        checkpoint_path=ck_path,
        log_path=log_path,
        updates=cfg.n_updates,
        timesteps=cfg.n_updates * cfg.batch_size,
        recent_rewards=recent,
        model=model,
    )


# ---------------------------------------------------------------------------
# checkpoint plumbing
# ---------------------------------------------------------------------------


def env_config_dict(cfg: EnvConfig) -> dict[str, Any]:
    return asdict(cfg)


def env_config_from_dict(d: dict[str, Any]) -> EnvConfig:
    d = dict(d)
    for key in ("pinpoints", "controllable"):
        if key in d and d[key] is not None:
            d[key] = tuple(d[key])
    return EnvConfig(**d)


def resume_configs(ck: Checkpoint) -> tuple[EnvConfig, PpoConfig]:
    """The environment and PPO configuration a checkpoint was trained with.

    Raises ``ValueError`` on checkpoints without trainer state (for example
    one written by :func:`levelgen.nets.save_checkpoint` alone).
    """
    tr = ck.meta.get("trainer")
    if tr is None:
        raise ValueError("checkpoint has no trainer state; cannot resume")
    return env_config_from_dict(ck.meta["env"]), PpoConfig(**tr["ppo"])


def _save_full(
    path: Path,
    model: ConvPolicy,
    optimizer: torch.optim.Optimizer,
    env: BatchEnv,
    sampler: torch.Generator,
    env_config: EnvConfig,
    cfg: PpoConfig,
    update: int,
    timestep: int,
    recent: list[float],
) -> Path:
    opt_state = optimizer.state_dict()
    arrays: dict[str, np.ndarray] = {
        "rng/torch": torch.get_rng_state().numpy(),
        "rng/sampler": sampler.get_state().numpy(),
    }
    steps: dict[str, float] = {}
    for idx, st in opt_state["state"].items():
        arrays[f"opt/{idx}/exp_avg"] = st["exp_avg"].numpy().astype("<f4")
        arrays[f"opt/{idx}/exp_avg_sq"] = st["exp_avg_sq"].numpy().astype("<f4")
        steps[str(idx)] = float(st["step"])
    env_state = env.state_dict()
    rng_states = env_state.pop("rng_states")
    for k, v in env_state.items():
        arrays[f"env/{k}"] = v
    meta = {
        "trainer": {
            "update": int(update),
            "ppo": asdict(cfg),
            "recent": [float(r) for r in recent],
            "opt_steps": steps,
            "opt_param_groups": opt_state["param_groups"],
            "env_rng_states": rng_states,
        }
    }
    return save_checkpoint(
        path,
        model,
        env_config=env_config_dict(env_config),
        step=timestep,
        extra_meta=meta,
        extra_arrays=arrays,
    )


def _load_trainer_state(
    ck: Checkpoint,
    model: ConvPolicy,
    optimizer: torch.optim.Optimizer,
    env: BatchEnv,
    sampler: torch.Generator,
) -> None:
    tr = ck.meta.get("trainer")
    if tr is None:
        raise ValueError("checkpoint has no trainer state; cannot resume")
    opt_state: dict[int, dict[str, Any]] = {}
    for idx_s, step in tr["opt_steps"].items():
        idx = int(idx_s)
        opt_state[idx] = {
            "step": torch.tensor(float(step)),
            "exp_avg": torch.from_numpy(ck.arrays[f"opt/{idx}/exp_avg"].copy()),
            "exp_avg_sq": torch.from_numpy(ck.arrays[f"opt/{idx}/exp_avg_sq"].copy()),
        }
    optimizer.load_state_dict({"state": opt_state, "param_groups": tr["opt_param_groups"]})
    env_state = dict(ck.namespace("env/"))
    env_state["rng_states"] = tr["env_rng_states"]
    env.load_state_dict(env_state)
    torch.set_rng_state(torch.from_numpy(ck.arrays["rng/torch"].copy()))
    sampler.set_state(torch.from_numpy(ck.arrays["rng/sampler"].copy()))
