"""Benchmark and evaluation harness tests. The heavyweight ladder and the
full-size evaluation grid run in the acceptance suite; here the same code
paths run at reduced scale."""
from pathlib import Path

import numpy as np
import pytest
import torch

from levelgen.env import BatchEnv, EnvConfig
from levelgen.harness import (
    BENCH_LADDER,
    EVAL_WIDTHS,
    BenchReport,
    EvalReport,
    bench_random_fps,
    evaluate,
    first_episode_rewards,
    format_bench_table,
    format_eval_table,
    greedy_policy,
    random_baseline,
    uniform_policy,
)
from levelgen.nets import ArchConfig, init_policy, save_checkpoint
from levelgen.ppo import env_config_dict
from levelgen import plots


def small_checkpoint(tmp_path: Path, *, randomize_shape=False, obs_size=5) -> Path:
    cfg = EnvConfig(
        domain="binary", max_width=8, max_height=8,
        obs_size=obs_size, randomize_shape=randomize_shape,
    )
    arch = ArchConfig(
        obs_size=obs_size,
        in_channels=cfg.observation_channels(),
        n_actions=cfg.n_actions,
        conv_channels=(4,),
        fc_dims=(16,),
    )
    model = init_policy(arch, seed=0)
    return save_checkpoint(
        tmp_path / "ck.npz", model, env_config=env_config_dict(cfg), step=0
    )


def test_first_episode_rewards_counts_each_env_once():
    cfg = EnvConfig(domain="binary", max_width=4, max_height=4, obs_size=5)
    env = BatchEnv(cfg, 6, seed=0)
    act = uniform_policy(cfg.n_actions, np.random.default_rng(1))
    rewards = first_episode_rewards(env, act)
    assert rewards.shape == (6,)
    assert np.isfinite(rewards).all()


def test_first_episode_rewards_deterministic():
    cfg = EnvConfig(domain="maze", max_width=5, max_height=5, obs_size=5, randomize_shape=True)
    runs = []
    for _ in range(2):
        env = BatchEnv(cfg, 4, seed=9)
        runs.append(first_episode_rewards(env, uniform_policy(cfg.n_actions, np.random.default_rng(2))))
    np.testing.assert_array_equal(runs[0], runs[1])


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def test_bench_ladder_shape_and_positive_fps():
    report = bench_random_fps(
        "binary", env_counts=(1, 4), seconds=0.05,
        config=EnvConfig(domain="binary", max_width=6, max_height=6, obs_size=5),
    )
    assert [r.n_envs for r in report.rows] == [1, 4]
    assert all(r.fps > 0 and r.domain == "binary" for r in report.rows)
    assert all(r.steps % r.n_envs == 0 for r in report.rows)
    assert report.machine["numpy"] == np.__version__
    assert report.fps_at(4) > 0
    with pytest.raises(KeyError):
        report.fps_at(999)
    with pytest.raises(ValueError):
        bench_random_fps("binary", env_counts=())


def test_bench_default_ladder_and_eval_widths():
    assert BENCH_LADDER == (1, 10, 50, 100, 200, 400, 600)
    assert EVAL_WIDTHS == (8, 16, 24, 32)


def test_bench_report_roundtrip(tmp_path):
    report = bench_random_fps(
        "maze", env_counts=(1, 2), seconds=0.02,
        config=EnvConfig(domain="maze", max_width=5, max_height=5, obs_size=5),
    )
    back_json = BenchReport.from_json(report.to_json())
    assert back_json.machine == report.machine
    assert back_json.rows == report.rows
    back_csv = BenchReport.from_csv(report.to_csv())
    assert back_csv.rows == report.rows  # csv carries rows; machine is json-only
    table = format_bench_table(report)
    assert "n. envs" in table and "maze" in table
    png = plots.plot_bench(report, tmp_path / "bench.png")
    assert png.exists() and png.stat().st_size > 0


def test_bench_consecutive_runs_stable():
    cfg = EnvConfig(domain="binary", max_width=8, max_height=8, obs_size=5)
    a = bench_random_fps("binary", env_counts=(16,), seconds=0.5, config=cfg)
    b = bench_random_fps("binary", env_counts=(16,), seconds=0.5, config=cfg)
    ratio = a.fps_at(16) / b.fps_at(16)
    assert 0.8 < ratio < 1.25


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def test_evaluate_grid_layout_and_determinism(tmp_path):
    ck = small_checkpoint(tmp_path)
    kwargs = dict(widths=(4, 6), eval_shapes=(False, True), n_seeds=2, episodes_per_seed=3, seed=5)
    report = evaluate(ck, **kwargs)
    assert len(report.cells) == 4
    assert [(c.eval_rand_shape, c.width) for c in report.cells] == [
        (False, 4), (False, 6), (True, 4), (True, 6),
    ]
    assert all(c.obs_size == 5 and c.trained_rand_shape is False for c in report.cells)
    assert all(c.episodes == 6 for c in report.cells)

    again = evaluate(ck, **kwargs)
    assert report.to_csv() == again.to_csv()
    assert report.to_json() == again.to_json()

    shifted = evaluate(ck, **{**kwargs, "seed": 6})
    assert shifted.to_csv() != report.to_csv()


def test_evaluate_report_roundtrip(tmp_path):
    ck = small_checkpoint(tmp_path, randomize_shape=True)
    report = evaluate(ck, widths=(4,), eval_shapes=(True,), n_seeds=1, episodes_per_seed=2)
    assert report.cells[0].trained_rand_shape is True
    back = EvalReport.from_json(report.to_json())
    assert back.cells == report.cells and back.domain == report.domain
    back_csv = EvalReport.from_csv(report.to_csv())
    assert back_csv.cells == report.cells
    table = format_eval_table(report)
    assert "rand 4" in table
    png = plots.plot_eval(report, ck.parent / "eval.png")
    assert png.exists() and png.stat().st_size > 0


def test_evaluate_greedy_matches_manual_rollout(tmp_path):
    # one cell, one seed: the cell mean must equal a hand-rolled greedy batch
    from levelgen.harness import _cell_env_seed
    from levelgen.nets import load_checkpoint

    ck_path = small_checkpoint(tmp_path)
    report = evaluate(ck_path, widths=(4,), eval_shapes=(False,), n_seeds=1, episodes_per_seed=4, seed=3)

    ck = load_checkpoint(ck_path)
    model = ck.build_model()
    from dataclasses import replace
    from levelgen.ppo import env_config_from_dict

    cfg = replace(
        env_config_from_dict(ck.meta["env"]),
        max_width=4, max_height=4, randomize_shape=False,
        deterministic_metrics=True, max_steps=None,
    )
    env = BatchEnv(cfg, 4, seed=_cell_env_seed(3, 0, 0))
    rewards = first_episode_rewards(env, greedy_policy(model))
    assert report.cells[0].mean == pytest.approx(rewards.mean(), abs=0)
    assert report.cells[0].std == pytest.approx(rewards.std(), abs=0)


def test_evaluate_rejects_mismatched_obs(tmp_path):
    cfg = EnvConfig(domain="binary", max_width=8, max_height=8, obs_size=5)
    arch = ArchConfig(
        obs_size=7, in_channels=cfg.observation_channels(), n_actions=cfg.n_actions,
        conv_channels=(4,), fc_dims=(8,),
    )
    path = save_checkpoint(
        tmp_path / "bad.npz", init_policy(arch, 0), env_config=env_config_dict(cfg), step=0
    )
    with pytest.raises(ValueError, match="observation size"):
        evaluate(path, widths=(4,), eval_shapes=(False,), n_seeds=1, episodes_per_seed=1)


def test_evaluate_width_too_small_for_pinpoints(tmp_path):
    # a 3-wide dungeon map keeps 9 cells; 10 pinpoints cannot fit
    cfg = EnvConfig(
        domain="dungeon", max_width=8, max_height=8, obs_size=5,
        pinpoints=tuple(["player"] + ["key"] * 9),
    )
    arch = ArchConfig(
        obs_size=5, in_channels=cfg.observation_channels(), n_actions=cfg.n_actions,
        conv_channels=(4,), fc_dims=(8,),
    )
    path = save_checkpoint(
        tmp_path / "pins.npz", init_policy(arch, 0), env_config=env_config_dict(cfg), step=0
    )
    with pytest.raises(ValueError):
        evaluate(path, widths=(3,), eval_shapes=(False,), n_seeds=1, episodes_per_seed=1)


# ---------------------------------------------------------------------------
# random baseline
# ---------------------------------------------------------------------------


def test_random_baseline_statistics():
    cfg = EnvConfig(domain="binary", max_width=4, max_height=4, obs_size=5)
    mean_a, std_a = random_baseline(cfg, episodes=200, seed=0)
    mean_b, std_b = random_baseline(cfg, episodes=200, seed=0)
    assert (mean_a, std_a) == (mean_b, std_b)
    assert std_a >= 0
    with pytest.raises(ValueError):
        random_baseline(cfg, episodes=99)


def test_random_baseline_two_runs_within_sem():
    cfg = EnvConfig(domain="binary", max_width=4, max_height=4, obs_size=5)
    n = 400
    mean_a, std_a = random_baseline(cfg, episodes=n, seed=1)
    mean_b, std_b = random_baseline(cfg, episodes=n, seed=2)
    sem = max(std_a, std_b) / np.sqrt(n)
    assert abs(mean_a - mean_b) <= 4 * sem


def test_reward_curve_plot(tmp_path):
    log = tmp_path / "metrics.csv"
    log.write_text(
        "update,timestep,episodes,mean_ep_reward,policy_loss,value_loss,entropy,approx_kl,clip_frac\n"
        "1,16,2,0.5,0.01,1.2,1.0,0.001,0.0\n"
        "2,32,4,0.8,0.02,1.0,0.9,0.002,0.1\n"
    )
    png = plots.plot_reward_curve(log, tmp_path / "curve.png")
    assert png.exists() and png.stat().st_size > 0
