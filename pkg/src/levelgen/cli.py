"""Command-line entry point: train / eval / bench / play / serve.

Every command takes one YAML config plus dotted-path overrides
(``--set env.domain=maze``). Run directories receive a fully resolved
config echo, the delimited reports, and rendered figures next to them.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

EXIT_CONFIG = 2
EXIT_RUNTIME = 3
OUT_ROOT_VAR = "LEVELGEN_OUT"


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _config_options(fn):
    fn = click.option(
        "--set", "overrides", multiple=True, metavar="KEY=VALUE",
        help="dotted-path config override, e.g. env.domain=maze",
    )(fn)
    fn = click.option("--seed", type=int, default=None, help="run seed (overrides config)")(fn)
    fn = click.option("--out", "out_flag", type=click.Path(), default=None, help="output directory")(fn)
    fn = click.option(
        "--config", "config_path", type=click.Path(), default=None,
        help="YAML run config file",
    )(fn)
    return fn


def _load_config(config_path, overrides, seed, base=None):
    from .config import load_run_config

    ov = list(overrides)
    if seed is not None:
        ov.append(f"seed={seed}")
    return load_run_config(config_path, ov, base=base)


def _resolve_out(cfg, out_flag, command: str) -> Path:
    if out_flag:
        return Path(out_flag)
    if cfg.out:
        return Path(cfg.out)
    root = Path(os.environ.get(OUT_ROOT_VAR, "runs"))
    return root / f"{command}-{time.strftime('%Y%m%d-%H%M%S')}"


def _write_echo(cfg, out_dir: Path) -> None:
    from .config import dump_run_config

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.yaml").write_text(dump_run_config(cfg))


# overrides that stay meaningful when a checkpoint dictates the configuration
_RESUME_KEYS = {"ppo.total_timesteps", "ppo.torch_threads", "out"}


def _check_resume_flags(config_path, overrides, seed) -> None:
    """A resumed run continues the checkpoint's configuration; reject flags
    the restore would silently ignore."""
    from .config import ConfigError

    if config_path is not None:
        raise ConfigError("--config cannot be combined with --resume; the "
                          "checkpoint carries the run configuration")
    if seed is not None:
        raise ConfigError("--seed cannot be combined with --resume; the "
                          "checkpoint carries the RNG state")
    bad = [ov.split("=", 1)[0] for ov in overrides
           if ov.split("=", 1)[0] not in _RESUME_KEYS]
    if bad:
        raise ConfigError(
            f"--set {', '.join(bad)} cannot be combined with --resume; only "
            f"{', '.join(sorted(_RESUME_KEYS))} may change on a resumed run"
        )


def _restore_resume_config(cfg, resume_path):
    """Fold the checkpoint's env/ppo configuration into the run config so the
    echo and the trainer see what the run will actually use."""
    from .nets import load_checkpoint
    from .ppo import resume_configs

    env_cfg, ppo_cfg = resume_configs(load_checkpoint(resume_path))
    ppo_cfg = dataclasses.replace(
        ppo_cfg,
        total_timesteps=cfg.ppo.total_timesteps,
        torch_threads=cfg.ppo.torch_threads,
    )
    return dataclasses.replace(cfg, seed=ppo_cfg.seed, env=env_cfg, ppo=ppo_cfg)


@click.group()
@click.version_option(package_name="levelgen")
def main() -> None:
    """Level-generation environments, trainer, and evaluation harness."""


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


@main.command()
@_config_options
@click.option("--total-timesteps", type=int, default=None, help="shortcut for ppo.total_timesteps")
@click.option("--resume", "resume_path", type=click.Path(), default=None,
              help="checkpoint to continue from; restores its env and ppo "
                   "configuration, so only the timestep horizon may change")
def train(config_path, overrides, seed, out_flag, total_timesteps, resume_path):
    """Train a policy with PPO and write checkpoint + metrics log."""
    from .config import ConfigError

    try:
        if resume_path is not None:
            _check_resume_flags(config_path, overrides, seed)
        cfg = _load_config(config_path, overrides, seed)
        if total_timesteps is not None:
            cfg = dataclasses.replace(
                cfg, ppo=dataclasses.replace(cfg.ppo, total_timesteps=total_timesteps)
            )
        if resume_path is not None:
            if not Path(resume_path).exists():
                raise ConfigError(f"resume checkpoint not found: {resume_path}")
            cfg = _restore_resume_config(cfg, resume_path)
        cfg.env.check_obs_invariant()
        arch = None if resume_path else cfg.resolved_arch()
        out_dir = _resolve_out(cfg, out_flag, "train")
    except (ConfigError, ValueError) as e:
        _fail(EXIT_CONFIG, str(e))

    _write_echo(cfg, out_dir)
    try:
        from . import plots
        from .ppo import train as run_train

        result = run_train(
            cfg.env, cfg.ppo, arch=arch, out_dir=out_dir,
            resume_from=resume_path, log_fn=click.echo,
        )
        if result.updates > 0:
            plots.plot_reward_curve(result.log_path, out_dir / "reward_curve.png")
    except Exception as e:
        _fail(EXIT_RUNTIME, str(e))
    click.echo(f"checkpoint: {result.checkpoint_path}")
    click.echo(f"metrics: {result.log_path}")


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


@main.command("eval")
@_config_options
@click.argument("checkpoint", type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              help="delimited report format")
def eval_cmd(config_path, overrides, seed, out_flag, checkpoint, fmt):
    """Evaluate a checkpoint over the width x shape generalization grid."""
    from .config import ConfigError

    try:
        cfg = _load_config(config_path, overrides, seed)
        if not Path(checkpoint).exists():
            raise ConfigError(f"checkpoint not found: {checkpoint}")
        from .nets import load_checkpoint

        ck = load_checkpoint(checkpoint)
        out_dir = _resolve_out(cfg, out_flag, "eval")
    except (ConfigError, ValueError) as e:
        _fail(EXIT_CONFIG, str(e))

    _write_echo(cfg, out_dir)
    try:
        from . import harness, plots

        report = harness.evaluate(
            ck,
            widths=cfg.eval.widths,
            eval_shapes=cfg.eval.eval_shapes,
            n_seeds=cfg.eval.n_seeds,
            episodes_per_seed=cfg.eval.episodes_per_seed,
            seed=cfg.seed,
            greedy=cfg.eval.greedy,
        )
    except ValueError as e:
        _fail(EXIT_CONFIG, str(e))
    except Exception as e:
        _fail(EXIT_RUNTIME, str(e))

    out_path = out_dir / f"eval.{fmt}"
    out_path.write_text(report.to_csv() if fmt == "csv" else report.to_json())
    from . import plots

    plots.plot_eval(report, out_dir / "eval.png")
    from .harness import format_eval_table

    click.echo(format_eval_table(report))
    click.echo(f"report: {out_path}")


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


@main.command()
@_config_options
@click.option("--domains", "-d", multiple=True,
              type=click.Choice(["binary", "maze", "dungeon"]),
              help="domains to bench (default: all three)")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
def bench(config_path, overrides, seed, out_flag, domains, fmt):
    """Measure random-action environment throughput across the batch ladder."""
    from .config import ConfigError

    try:
        cfg = _load_config(config_path, overrides, seed)
        out_dir = _resolve_out(cfg, out_flag, "bench")
    except (ConfigError, ValueError) as e:
        _fail(EXIT_CONFIG, str(e))

    _write_echo(cfg, out_dir)
    try:
        from . import harness, plots

        rows = []
        machine = harness.machine_descriptor()
        for domain in domains or ("binary", "maze", "dungeon"):
            env_cfg = dataclasses.replace(cfg.env, domain=domain, pinpoints=(), controllable=())
            part = harness.bench_random_fps(
                domain, cfg.bench.ladder, cfg.bench.seconds, config=env_cfg, seed=cfg.seed
            )
            rows.extend(part.rows)
        report = harness.BenchReport(machine=machine, rows=rows)
    except Exception as e:
        _fail(EXIT_RUNTIME, str(e))

    out_path = out_dir / f"bench.{fmt}"
    out_path.write_text(report.to_csv() if fmt == "csv" else report.to_json())
    from . import plots

    plots.plot_bench(report, out_dir / "bench.png")
    from .harness import format_bench_table

    click.echo(format_bench_table(report))
    click.echo(f"report: {out_path}")


# ---------------------------------------------------------------------------
# play
# ---------------------------------------------------------------------------


def _frame(state) -> str:
    from .textfmt import render_text

    lines = render_text(state.grid).splitlines()
    r, c = state.pos
    row = list(lines[r])
    row[c] = "@"  # agent marker, display only
    lines[r] = "".join(row)
    return "\n".join(lines)


@main.command()
@_config_options
@click.argument("policy", default="random")
@click.option("--trace", "trace_path", type=click.Path(), default=None,
              help="write a JSONL episode trace")
@click.option("--greedy/--sample", default=True, help="action selection for checkpoints")
def play(config_path, overrides, seed, out_flag, policy, trace_path, greedy):
    """Run one episode with POLICY (a checkpoint path, or "random"),
    printing ASCII frames and per-step rewards."""
    import torch

    from .config import ConfigError

    try:
        model = None
        base = None
        if policy != "random":
            if not Path(policy).exists():
                raise ConfigError(f"checkpoint not found: {policy}")
            from .nets import load_checkpoint

            ck = load_checkpoint(policy)
            model = ck.build_model()
            model.eval()
            # The checkpoint's environment is the starting point; the config
            # file and env.* overrides adjust individual fields on top of it.
            base = {"env": dict(ck.meta["env"])}
        cfg = _load_config(config_path, overrides, seed, base=base)
        env_cfg = cfg.env
        if model is not None and model.arch.obs_size != env_cfg.obs_size:
            raise ConfigError("checkpoint architecture and environment observation size disagree")
    except (ConfigError, ValueError) as e:
        _fail(EXIT_CONFIG, str(e))

    try:
        from .env import observe as env_observe
        from .env import reset as env_reset
        from .env import step as env_step

        rng = np.random.default_rng(cfg.seed)
        action_rng = np.random.default_rng(cfg.seed + 1)
        sampler = torch.Generator()
        sampler.manual_seed(cfg.seed + 2)
        state, obs = env_reset(env_cfg, rng)

        trace_file = open(trace_path, "w") if trace_path else None
        click.echo(f"step 0  loss {state.prev_loss:g}")
        click.echo(_frame(state))
        while not state.done:
            if model is None:
                action = int(action_rng.integers(env_cfg.n_actions))
            else:
                with torch.no_grad():
                    logits, _ = model(torch.from_numpy(obs[None]))
                if greedy:
                    action = int(logits.argmax())
                else:
                    probs = torch.softmax(logits, dim=-1)
                    action = int(torch.multinomial(probs, 1, generator=sampler))
            state, reward, done, info = env_step(state, action)
            obs = env_observe(state)
            click.echo(
                f"step {state.t}  action {action}  reward {reward:g}  loss {state.prev_loss:g}"
            )
            click.echo(_frame(state))
            if trace_file:
                trace_file.write(json.dumps({
                    "step": state.t,
                    "action": action,
                    "reward": reward,
                    "loss": state.prev_loss,
                    "metrics": {k: int(v) for k, v in state.metrics.values.items()},
                    "pos": list(state.pos),
                }) + "\n")
        if trace_file:
            trace_file.close()
        click.echo(
            f"episode reward {state.ep_reward:g}  "
            f"start loss {state.ep_start_loss:g}  final loss {state.prev_loss:g}"
        )
    except Exception as e:
        _fail(EXIT_RUNTIME, str(e))


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------


@main.command()
@_config_options
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8765, show_default=True)
@click.option("--checkpoint", "checkpoint", type=click.Path(), default=None,
              help="policy checkpoint to drive the agent (default: random actions)")
def serve(config_path, overrides, seed, out_flag, host, port, checkpoint):
    """Serve designer sessions over a websocket."""
    from .config import ConfigError

    try:
        cfg = _load_config(config_path, overrides, seed)
        if checkpoint is not None and not Path(checkpoint).exists():
            raise ConfigError(f"checkpoint not found: {checkpoint}")
    except (ConfigError, ValueError) as e:
        _fail(EXIT_CONFIG, str(e))

    try:
        from .serve import run_server

        run_server(host=host, port=port, default_config=cfg.env,
                   checkpoint=checkpoint, seed=cfg.seed)
    except KeyboardInterrupt:
        click.echo("stopped")
    except Exception as e:
        _fail(EXIT_RUNTIME, str(e))


if __name__ == "__main__":
    main()
