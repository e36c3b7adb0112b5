"""Throughput benchmarking, generalization evaluation grids, and the
random-policy baseline.

Reports are plain dataclasses with CSV/JSON encodings that round-trip
exactly; evaluation cells are pure functions of (checkpoint, seeds,
config), so a re-run regenerates byte-identical files.
"""
from __future__ import annotations

import csv
import io
import json
import os
import platform
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .env import BatchEnv, EnvConfig
from .nets import Checkpoint, ConvPolicy, load_checkpoint
from .ppo import env_config_from_dict

BENCH_LADDER = (1, 10, 50, 100, 200, 400, 600)
EVAL_WIDTHS = (8, 16, 24, 32)

ActFn = Callable[[np.ndarray], np.ndarray]


def machine_descriptor() -> dict[str, str]:
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "torch": torch.__version__,
        "cpus": str(os.cpu_count() or 1),
    }


# ---------------------------------------------------------------------------
# episode runners
# ---------------------------------------------------------------------------


def first_episode_rewards(env: BatchEnv, act_fn: ActFn) -> np.ndarray:
    """Step the batch until every row has finished one episode; return each
    row's first episode reward. Rows that restart early keep stepping (their
    later episodes are discarded) so the batch stays lock-step deterministic."""
    b = env.n_envs
    rewards = np.zeros(b, dtype=np.float64)
    seen = np.zeros(b, dtype=bool)
    obs = env.reset()
    while not seen.all():
        obs, reward, done, info = env.step(act_fn(obs))
        first = done & ~seen
        rewards[first] = info["episode_reward"][first]
        seen |= first
    return rewards


def greedy_policy(model: ConvPolicy) -> ActFn:
    def act(obs: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            logits, _ = model(torch.from_numpy(obs))
        return logits.argmax(dim=-1).numpy()

    return act


def sampling_policy(model: ConvPolicy, sampler: torch.Generator) -> ActFn:
    def act(obs: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            logits, _ = model(torch.from_numpy(obs))
            probs = torch.softmax(logits, dim=-1)
        return torch.multinomial(probs, 1, generator=sampler).squeeze(1).numpy()

    return act


def uniform_policy(n_actions: int, rng: np.random.Generator) -> ActFn:
    def act(obs: np.ndarray) -> np.ndarray:
        return rng.integers(0, n_actions, size=obs.shape[0]).astype(np.int64)

    return act


# ---------------------------------------------------------------------------
# throughput
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchRow:
    domain: str
    n_envs: int
    steps: int
    seconds: float
    fps: float


@dataclass
class BenchReport:
    machine: dict[str, str]
    rows: list[BenchRow]

    def fps_at(self, n_envs: int) -> float:
        for row in self.rows:
            if row.n_envs == n_envs:
                return row.fps
        raise KeyError(f"no ladder point at {n_envs} envs")

    def to_json(self) -> str:
        return json.dumps(
            {"machine": self.machine, "rows": [asdict(r) for r in self.rows]}, indent=2
        )

    @classmethod
    def from_json(cls, text: str) -> "BenchReport":
        d = json.loads(text)
        return cls(machine=d["machine"], rows=[BenchRow(**r) for r in d["rows"]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["domain", "n_envs", "steps", "seconds", "fps"])
        for r in self.rows:
            w.writerow([r.domain, r.n_envs, r.steps, repr(r.seconds), repr(r.fps)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BenchReport":
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            rows.append(
                BenchRow(
                    domain=rec["domain"],
                    n_envs=int(rec["n_envs"]),
                    steps=int(rec["steps"]),
                    seconds=float(rec["seconds"]),
                    fps=float(rec["fps"]),
                )
            )
        return cls(machine={}, rows=rows)


def bench_random_fps(
    domain: str,
    env_counts: Sequence[int] = BENCH_LADDER,
    seconds: float = 2.0,
    *,
    config: EnvConfig | None = None,
    seed: int = 0,
) -> BenchReport:
    """Time batched random-action stepping at each ladder point. Construction
    and a short warm-up are excluded from the measured window."""
    if not env_counts:
        raise ValueError("env_counts must be non-empty")
    cfg = config or EnvConfig(domain=domain)
    rows = []
    for n in env_counts:
        env = BatchEnv(cfg, n, seed=seed)
        act = uniform_policy(cfg.n_actions, np.random.default_rng(seed + n))
        obs = env.reset()
        for _ in range(3):  # warm-up: first steps pay allocation/cache costs
            obs, _, _, _ = env.step(act(obs))
        steps = 0
        t0 = time.perf_counter()
        while (elapsed := time.perf_counter() - t0) < seconds:
            obs, _, _, _ = env.step(act(obs))
            steps += n
        rows.append(BenchRow(domain=domain, n_envs=n, steps=steps, seconds=elapsed, fps=steps / elapsed))
    return BenchReport(machine=machine_descriptor(), rows=rows)


def format_bench_table(report: BenchReport) -> str:
    domains = sorted({r.domain for r in report.rows})
    counts = sorted({r.n_envs for r in report.rows})
    by_key = {(r.domain, r.n_envs): r.fps for r in report.rows}
    header = ["n. envs"] + [str(n) for n in counts]
    lines = [header] + [
        [d] + [f"{by_key[(d, n)]:,.0f}" if (d, n) in by_key else "-" for n in counts]
        for d in domains
    ]
    widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in lines)


# ---------------------------------------------------------------------------
# evaluation grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalCell:
    obs_size: int
    trained_rand_shape: bool
    eval_rand_shape: bool
    width: int
    episodes: int
    mean: float
    std: float


@dataclass
class EvalReport:
    domain: str
    checkpoint_step: int
    n_seeds: int
    episodes_per_seed: int
    cells: list[EvalCell]

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        d["cells"] = [EvalCell(**c) for c in d["cells"]]
        return cls(**d)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(
            ["obs_size", "trained_rand_shape", "eval_rand_shape", "width", "episodes", "mean", "std"]
        )
        for c in self.cells:
            w.writerow(
                [
                    c.obs_size,
                    int(c.trained_rand_shape),
                    int(c.eval_rand_shape),
                    c.width,
                    c.episodes,
                    repr(c.mean),
                    repr(c.std),
                ]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, *, domain: str = "", checkpoint_step: int = 0) -> "EvalReport":
        cells = []
        for rec in csv.DictReader(io.StringIO(text)):
            cells.append(
                EvalCell(
                    obs_size=int(rec["obs_size"]),
                    trained_rand_shape=bool(int(rec["trained_rand_shape"])),
                    eval_rand_shape=bool(int(rec["eval_rand_shape"])),
                    width=int(rec["width"]),
                    episodes=int(rec["episodes"]),
                    mean=float(rec["mean"]),
                    std=float(rec["std"]),
                )
            )
        # csv carries the cells only; run metadata lives in the json encoding
        return cls(
            domain=domain,
            checkpoint_step=checkpoint_step,
            n_seeds=0,
            episodes_per_seed=0,
            cells=cells,
        )


def _cell_env_seed(base_seed: int, cell_idx: int, seed_idx: int) -> int:
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(cell_idx, seed_idx))
    return int(ss.generate_state(1, np.uint64)[0])


def evaluate(
    checkpoint: Checkpoint | str | Path,
    *,
    widths: Sequence[int] = EVAL_WIDTHS,
    eval_shapes: Sequence[bool] = (False, True),
    n_seeds: int = 3,
    episodes_per_seed: int = 32,
    seed: int = 0,
    greedy: bool = True,
) -> EvalReport:
    """Evaluate a trained policy over the width x shape generalization grid.

    Each cell runs n_seeds independent batches of episodes_per_seed episodes
    with greedy (argmax) action selection; mean and population std are taken
    over all n_seeds * episodes_per_seed episode rewards. Cell seeds derive
    from (seed, cell index, seed index), so reports are exactly reproducible.
    """
    if n_seeds < 1 or episodes_per_seed < 1:
        raise ValueError("need at least one seed and one episode")
    ck = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    model = ck.build_model()
    model.eval()
    base_cfg = env_config_from_dict(ck.meta["env"])
    if ck.arch.obs_size != base_cfg.obs_size:
        raise ValueError("checkpoint architecture and environment observation size disagree")

    cells = []
    cell_idx = 0
    for eval_rand in eval_shapes:
        for width in widths:
            cfg = replace(
                base_cfg,
                max_width=width,
                max_height=width,
                randomize_shape=bool(eval_rand),
                deterministic_metrics=True,
                max_steps=None,
            )
            rewards = []
            for seed_idx in range(n_seeds):
                env = BatchEnv(cfg, episodes_per_seed, seed=_cell_env_seed(seed, cell_idx, seed_idx))
                if greedy:
                    act = greedy_policy(model)
                else:
                    sampler = torch.Generator()
                    sampler.manual_seed(_cell_env_seed(seed, cell_idx, seed_idx) % (2**63))
                    act = sampling_policy(model, sampler)
                rewards.append(first_episode_rewards(env, act))
            all_rewards = np.concatenate(rewards)
            cells.append(
                EvalCell(
                    obs_size=base_cfg.obs_size,
                    trained_rand_shape=base_cfg.randomize_shape,
                    eval_rand_shape=bool(eval_rand),
                    width=int(width),
                    episodes=all_rewards.size,
                    mean=float(all_rewards.mean()),
                    std=float(all_rewards.std()),
                )
            )
            cell_idx += 1
    return EvalReport(
        domain=base_cfg.domain,
        checkpoint_step=ck.step,
        n_seeds=n_seeds,
        episodes_per_seed=episodes_per_seed,
        cells=cells,
    )


def format_eval_table(reports: EvalReport | Sequence[EvalReport]) -> str:
    """Rows: one model per (obs size, trained shape); columns: eval width,
    split into fixed-shape and random-shape column groups."""
    if isinstance(reports, EvalReport):
        reports = [reports]
    cells = [c for r in reports for c in r.cells]
    widths = sorted({c.width for c in cells})
    models = sorted({(c.obs_size, c.trained_rand_shape) for c in cells})
    by_key = {(c.obs_size, c.trained_rand_shape, c.eval_rand_shape, c.width): c for c in cells}

    header = ["obs", "trained shape"]
    for rand in (False, True):
        for w in widths:
            header.append(f"{'rand' if rand else 'fixed'} {w}")
    lines = [header]
    for obs, trained in models:
        row = [str(obs), "random" if trained else "fixed"]
        for rand in (False, True):
            for w in widths:
                c = by_key.get((obs, trained, rand, w))
                row.append(f"{c.mean:.2f}±{c.std:.2f}" if c else "-")
        lines.append(row)
    col_w = [max(len(row[i]) for row in lines) for i in range(len(header))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(row, col_w)) for row in lines)


# ---------------------------------------------------------------------------
# random baseline
# ---------------------------------------------------------------------------


def random_baseline(
    env_config: EnvConfig, episodes: int = 1000, *, seed: int = 0
) -> tuple[float, float]:
    """Mean and population std of episode reward under uniform random actions."""
    if episodes < 100:
        raise ValueError("need at least 100 episodes for a stable baseline")
    env = BatchEnv(env_config, episodes, seed=seed)
    act = uniform_policy(env_config.n_actions, np.random.default_rng(seed + 1))
    rewards = first_episode_rewards(env, act)
    return float(rewards.mean()), float(rewards.std())
